from outpainter.cli import main
import sys

sys.exit(main())
