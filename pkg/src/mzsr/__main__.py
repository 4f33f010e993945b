from mzsr.cli import main

main()
