"""Allow ``python -m symact`` as an alias for the console script."""

import sys

from .harness.cli import main

sys.exit(main())
