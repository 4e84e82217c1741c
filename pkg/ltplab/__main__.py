import sys

from ltplab.main import main

sys.exit(main())
