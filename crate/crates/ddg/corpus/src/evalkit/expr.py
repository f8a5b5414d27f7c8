SAMPLE = "1 + 1"


def evaluate(expression):
    return eval(expression)


def evaluate_with(expression, env):
    scope = dict(env)
    result = eval(expression, scope)
    return result


def compile_rule(rule_text, name):
    code = compile(rule_text, name, "eval")
    return code


def run_snippet(snippet):
    source = snippet.strip()
    exec(source)


def constant_fold():
    return eval("2 ** 10")


def default_scope(debug):
    scope = {}
    if debug:
        scope["trace"] = True
    exec("import math", scope)
    return scope


def is_safe(text):
    tree = compile("0", "<probe>", "eval")
    return text.isdigit() and tree is not None


def tokenize(text):
    return text.split()


def literal(text):
    import ast
    return ast.literal_eval(text)
