import sys

from simcf.harness.cli import main

sys.exit(main())
