"""ViBE - Metric tables and charts"""
