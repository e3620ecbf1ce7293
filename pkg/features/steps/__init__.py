"""
BDD Step Definitions Package
Contains step implementations for Gherkin scenarios
"""

