import sys

from erw.cli import main

sys.exit(main())
