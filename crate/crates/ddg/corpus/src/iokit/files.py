import os

CONFIG_PATH = "/etc/iokit.cfg"
MARKER_DIR = "/tmp/iokit"
TEMP_DIR = "/tmp"
DEFAULT_LOG = "/tmp/iokit.log"


def read_text(path):
    with open(path) as fh:
        return fh.read()


def write_report(directory, name, body):
    target = os.path.join(directory, name)
    with open(target, "w") as out:
        out.write(body)


def first_existing(candidates):
    for candidate in candidates:
        if os.path.exists(candidate):
            return open(candidate, "rb")
    return None


def open_kw(filename):
    return open(file=filename, mode="rb")


def read_config():
    with open(CONFIG_PATH) as fh:
        return fh.read()


def touch_marker(name):
    marker = MARKER_DIR + "/ready"
    open(marker, "w").close()
    return name


def temp_path(suffix):
    path = TEMP_DIR + "/scratch"
    fh = open(path, "w")
    fh.close()
    return path + suffix


def default_open(mode):
    return open(DEFAULT_LOG, mode)


def join_path(base, name):
    return os.path.join(base, name)


class Reader:
    def __init__(self, filename):
        self.filename = filename

    def read(self):
        with open(self.filename) as fh:
            return fh.read()
