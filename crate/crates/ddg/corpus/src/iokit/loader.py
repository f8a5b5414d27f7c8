def load_module_source(path):
    with open(path) as fh:
        source = fh.read()
    code = compile(source, path, "exec")
    namespace = {}
    exec(code, namespace)
    return namespace


def resolve(obj, dotted):
    names = dotted.split(".")
    for n in names:
        obj = getattr(obj, n)
    return obj


def attr_or_default(obj, name, default):
    try:
        return getattr(obj, name)
    except AttributeError:
        return default


def version_of(module):
    return getattr(module, "__version__", None)


def describe(obj):
    kind = type(obj).__name__
    doc = getattr(obj, "__doc__")
    return kind, doc


def bootstrap():
    code = compile("x = 1", "<bootstrap>", "exec")
    ns = {}
    exec(code, ns)
    return ns


class Registry:
    def lookup(self, obj, path):
        current = obj
        for part in path:
            current = getattr(current, part)
        return current
