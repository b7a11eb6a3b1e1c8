"""
Django settings for the fkwalk project.

fkwalk has no web surface and no database; Django provides the settings layer, the logging
configuration and the management command framework that the solver commands run under.

For the full list of settings and their values, see
https://docs.djangoproject.com/en/5.1/ref/settings/
"""

import os
from pathlib import Path

from environ import Env

env = Env(
    # set casting, default value
    DEBUG=(bool, False)
)

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent

Env.read_env(os.path.join(BASE_DIR, ".env"))

DEBUG = env.bool("DEBUG")
if DEBUG:
    # Use dotenv for debug environments
    from dotenv import load_dotenv

    load_dotenv()

# Nothing is signed or hashed with this key; Django only requires it to be present.
SECRET_KEY: str = env.str("SECRET_KEY", default="fkwalk-local")  # type: ignore

ENVIRONMENT = env.str("ENVIRONMENT", default=None)

# Application definition

INSTALLED_APPS = [
    "fkwalk.fkwalk.apps.FkwalkConfig",
]

DATABASES: dict = {}

LANGUAGE_CODE = "en-gb"

TIME_ZONE = "UTC"

USE_I18N = False

USE_TZ = True

# Solver settings

# 0 means one worker per available CPU
FKWALK_WORKERS = env.int("FKWALK_WORKERS", default=0)
FKWALK_OUTPUT_DIR = env.str("FKWALK_OUTPUT_DIR", default="out")
FKWALK_PRESETS_DIR = env.str("FKWALK_PRESETS_DIR", default=os.path.join(BASE_DIR, "fkwalk", "presets"))

FKWALK_LOG_LEVEL = env.str("FKWALK_LOG_LEVEL", default="INFO" if not DEBUG else "DEBUG")

LOGGING = {
    "version": 1,
    "disable_existing_loggers": False,
    "filters": {
        "run_context": {
            "()": "fkwalk.logging_filters.RunLogFilter",
        },
    },
    "formatters": {
        "verbose": {
            "format": "[%(asctime)s] [%(process)d:%(threadName)s] [run=%(run_id)s cmd=%(command)s] [%(levelname)s] [%(name)s] %(message)s",
            "datefmt": "%Y-%m-%d %H:%M:%S %z",
        },
    },
    "handlers": {
        "console": {
            "level": FKWALK_LOG_LEVEL,
            "class": "logging.StreamHandler",
            "formatter": "verbose",
            "filters": ["run_context"],
        },
    },
    "loggers": {
        "": {
            "level": FKWALK_LOG_LEVEL,
            "handlers": ["console"],
            "propagate": True,
        },
    },
}

SENTRY_DSN = env.str("SENTRY_DSN", default=None)
if SENTRY_DSN:
    import sentry_sdk

    sentry_sdk.init(
        dsn=SENTRY_DSN,
        environment=ENVIRONMENT,
        # Long sweeps are batch jobs, tracing them adds nothing
        traces_sample_rate=0.0,
    )
