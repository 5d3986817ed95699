import sys

from sths.cli import main

sys.exit(main())
