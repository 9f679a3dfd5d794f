"""SKIPNet - command-line entry point."""

import sys

from skipnet.cli import main

if __name__ == "__main__":
    sys.exit(main())
