import sys

from mprsim.cli import main

sys.exit(main())
