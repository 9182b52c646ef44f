from skull2face.cli import main

main(prog_name='skull2face')
