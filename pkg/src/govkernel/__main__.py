from govkernel.cli import main

raise SystemExit(main())
