# gunicorn.conf.py
import os

from config import get_int_env

# Analyses are CPU bound; scale with processes, not threads
workers = get_int_env("WORKERS", 2)
threads = get_int_env("THREADS", 1)
worker_class = "gthread"
wsgi_app = "main:app"

bind = f"0.0.0.0:{int(os.getenv('PORT', 8080))}"

accesslog = "-"
errorlog = "-"

# A 10^6-token analysis can take minutes
timeout = get_int_env("GUNICORN_TIMEOUT", 600)
keepalive = 5
limit_request_line = 8190
