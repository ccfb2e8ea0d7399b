from sys import argv, exit

from ecrconv import cli

if __name__ == '__main__':
    exit(cli.main(argv[1:]))
