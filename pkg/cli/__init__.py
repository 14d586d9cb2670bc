"""ViBE - Command-line interface"""
