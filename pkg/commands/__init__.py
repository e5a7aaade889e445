#!/usr/bin/env python3
"""
Topic/Expectation Pipeline Commands Package

This package contains all command modules of the pipeline. Each command is a
self-contained module exposing ``add_arguments``, ``run`` and ``main`` so it
can be executed independently or through the main tep.py entrypoint.
"""

# This file makes the commands directory a Python package
