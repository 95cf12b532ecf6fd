"""
Test suite for notification push service
"""
