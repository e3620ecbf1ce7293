"""
BDD Features Package
Contains Gherkin feature files and Behave configuration
"""

