import pytest

pytest_plugins = [
    "tests.fixtures",
    "tests.acceptance.fixtures",
]


def pytest_addoption(parser):
    parser.addoption("--env", help="load env config")
    parser.addoption(
        "--acceptance", action="store_true", help="run the long numerical reproductions"
    )


def pytest_collection_modifyitems(config, items):
    if config.getoption("--env"):
        import dotenv

        dotenv.load_dotenv(config.option.env)

    if config.getoption("--acceptance"):
        return
    skip = pytest.mark.skip(reason="needs --acceptance")
    for item in items:
        if "acceptance" in item.keywords:
            item.add_marker(skip)