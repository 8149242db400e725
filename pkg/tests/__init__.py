"""
Tests package for the HDLSS score bias toolkit
"""
