from awrascle.cli import main
import sys
sys.exit(main())
