"""Allow ``python -m src.spanproto``."""

import sys

from src.spanproto.cli import main

sys.exit(main())
