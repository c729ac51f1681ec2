"""Entry point for `python -m quenchlab`."""

import sys

from quenchlab.main import main

sys.exit(main())
