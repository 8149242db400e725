"""
Initialize the src module for the HDLSS score bias toolkit.

Library code lives in the handlers directory; run the command line with
`python -m src.main`.
"""
