"""
Django settings for the fusionopt project.
Configuration for the D-optimal data fusion solver and its management commands.
"""

import os
from pathlib import Path

# ==================================================
# BASE
# ==================================================

BASE_DIR = Path(__file__).resolve().parent.parent


# ==================================================
# SECURITY
# ==================================================

SECRET_KEY = os.environ.get(
    "DJANGO_SECRET_KEY",
    "unsafe-secret-key-for-local-only"
)

DEBUG = False

ALLOWED_HOSTS = []


# ==================================================
# APPLICATION DEFINITION
# ==================================================

INSTALLED_APPS = [
    "fusion",
]


# ==================================================
# DATABASE (run records)
# ==================================================

DATABASES = {
    "default": {
        "ENGINE": "django.db.backends.sqlite3",
        "NAME": os.environ.get("FUSIONOPT_DB", BASE_DIR / "db.sqlite3"),
    }
}


# ==================================================
# INTERNATIONALIZATION
# ==================================================

LANGUAGE_CODE = "en-us"
TIME_ZONE = "UTC"
USE_I18N = False
USE_TZ = True


# ==================================================
# LOGGING
# ==================================================

LOGGING = {
    "version": 1,
    "disable_existing_loggers": False,
    "formatters": {
        "plain": {
            "format": "{levelname} {name}: {message}",
            "style": "{",
        },
    },
    "handlers": {
        "console": {
            "class": "logging.StreamHandler",
            "formatter": "plain",
        },
    },
    "loggers": {
        "fusion": {
            "handlers": ["console"],
            "level": os.environ.get("FUSIONOPT_LOG_LEVEL", "WARNING"),
            "propagate": False,
        },
    },
}


# ==================================================
# SOLVER DEFAULTS
# ==================================================

FUSIONOPT = {
    # Frank-Wolfe effort
    "FW_ROOT_ITERS": 2000,
    "FW_NODE_ITERS": 200,
    "FW_PROBE_ITERS": 200,
    "FW_TOL": 1e-6,

    # Branch-and-bound limits
    "GAP_TOL": 1e-6,
    "TIME_LIMIT": 600.0,
    "NODE_LIMIT": 100000,
    "DIVE_EVERY": 50,

    # Cut families and probing
    "GRADIENT_CUTS": True,
    "SUBMODULAR_CUTS": True,
    "OPTIMALITY_CUTS": True,
    "XI0": 0.05,
    "XI1": 0.95,
    "PAIR_BUDGET_FACTOR": 3,

    # Sherman-Morrison inverse refresh period
    "SM_REFRESH": 64,

    # Parallel corpus runs in `bench`
    "THREADS": int(os.environ.get("FUSIONOPT_THREADS", "1") or 1),
}


# ==================================================
# DEFAULTS
# ==================================================

DEFAULT_AUTO_FIELD = "django.db.models.BigAutoField"
