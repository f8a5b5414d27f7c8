DEFAULTS = object()


def render_expr(template, values):
    for key in values:
        template = template.replace("{" + key + "}", str(values[key]))
    return eval(template)


def exec_block(lines):
    buf = []
    for line in lines:
        buf.append(line)
    exec("\n".join(buf))


def safe_name(name):
    if not name.isidentifier():
        raise ValueError(name)
    return getattr(DEFAULTS, "fallback")
