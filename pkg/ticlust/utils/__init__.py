# ticlust/utils/__init__.py
from . import config
from . import logging
