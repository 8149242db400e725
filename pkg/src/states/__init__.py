"""
States package for the HDLSS score bias toolkit.
Contains data models, the error hierarchy and run state management.
"""
