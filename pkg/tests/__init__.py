"""ViBE - Tests"""
