"""
Views package for the HDLSS score bias toolkit.
Contains progress and summary presentation.
"""
