from metanerv.interface.cli import app


def run() -> None:
    app()


if __name__ == "__main__":
    run()
