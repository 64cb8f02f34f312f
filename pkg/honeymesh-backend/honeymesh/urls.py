"""
Top level URL configuration for the HoneyMesh project.

The simulator has no HTTP surface; only the admin (run archive) is
routed.
"""
from __future__ import annotations

from django.contrib import admin
from django.urls import path


urlpatterns: list = [
    path('admin/', admin.site.urls),
]
