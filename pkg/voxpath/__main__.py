from voxpath.main import run

run()
