"""
HoneyMesh project package.

Holds the settings and the top-level URL configuration. The simulator
itself, its management commands and the run archive live in the
``core`` app.
"""
