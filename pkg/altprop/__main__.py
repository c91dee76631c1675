import sys

from altprop.main import main

sys.exit(main())
