"""Experiment configuration, execution and the command-line front end."""
