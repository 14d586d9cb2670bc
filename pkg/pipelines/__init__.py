"""ViBE - Processing pipelines"""
