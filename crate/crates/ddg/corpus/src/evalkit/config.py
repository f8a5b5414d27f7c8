DEFAULT_CONFIG = "/etc/evalkit.cfg"
FEATURE_HOOK = "pass"


def load_defaults(options):
    spec = options.get("default", "None")
    return eval(spec, {}, {})


def getinit_like(name, var):
    init = var["="]
    if "," in init:
        real, imag = init[1:-1].split(",")
        value = complex(float(real), float(imag))
    else:
        value = eval(init, {}, {})
    return name, value


def version_tuple(version):
    parts = version.split(".")
    major = int(parts[0])
    code = compile("(1, 0)", "<version>", "eval")
    return major, eval(code)


def read_default_config(section):
    with open(DEFAULT_CONFIG) as fh:
        data = fh.read()
    return data.count(section)


def feature_enabled(flags, name):
    enabled = name in flags
    if enabled:
        exec(FEATURE_HOOK)
    return enabled


class Settings:
    def apply(self, overrides):
        for key, expr in overrides.items():
            value = eval(expr)
            setattr(self, key, value)


class Formula:
    def __init__(self, text):
        self.text = text

    def value(self):
        return eval(self.text)
