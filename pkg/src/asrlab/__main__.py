import sys

from asrlab.cli import main

sys.exit(main())
