"""Test suite for the Safe Rejuvenation Toolkit."""
