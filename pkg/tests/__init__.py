"""Channel toolkit tests"""
