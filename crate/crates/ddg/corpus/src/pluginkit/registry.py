import os

BUILTINS = ("core",)
BOOTSTRAP_CODE = "pass"
BOOT = "pass"
PLUGIN_DIR = "/usr/share/pluginkit"


def load_entry(entry_point):
    module_name, _, attr = entry_point.partition(":")
    module = __import__(module_name)
    return getattr(module, attr)


def builtin_plugins(names):
    found = []
    for name in names:
        if name in BUILTINS:
            found.append(name)
    exec(BOOTSTRAP_CODE)
    return found


def reset(cache):
    cache.clear()
    os.system("true")


def scan_dir():
    entries = os.listdir(PLUGIN_DIR)
    for entry in entries:
        if entry.endswith(".py"):
            exec(compile(BOOT, entry, "exec"))


class Plugin:
    def configure(self, options):
        self.command = options["command"]
        os.system(self.command)
