from fcmvc.main import main

raise SystemExit(main())
