import sys

from adabayes.cli import main

sys.exit(main())
