import sys

from ner_forge.cli import main

sys.exit(main())
