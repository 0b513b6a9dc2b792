"""
Entry point for running coopfusion as a module:
    python -m coopfusion run configs/default.json
"""

import sys
from .app import main

if __name__ == "__main__":
    sys.exit(main())
