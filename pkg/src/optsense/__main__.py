import sys

from optsense.harness.cli import main

sys.exit(main())
