import sys

from contingency.cli import main

sys.exit(main())
