"""
Handlers package for the HDLSS score bias toolkit.
Contains the numerical routines, simulation, estimators and command handlers.
"""
