"""
WSGI config for the HoneyMesh project.

Only needed to serve the admin run archive. It exposes the WSGI callable
as a module-level variable named ``application``.
"""
from __future__ import annotations

import os

from django.core.wsgi import get_wsgi_application  # type: ignore

os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'honeymesh.settings')

application = get_wsgi_application()
