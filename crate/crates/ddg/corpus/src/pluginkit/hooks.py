def call_hook(module, hook_name, payload):
    hook = getattr(module, hook_name)
    return hook(payload)


def eval_condition(ctx, condition):
    local = {"ctx": ctx}
    return bool(eval(condition, {}, local))


def noop_hook(module):
    hook = getattr(module, "noop")
    return hook()


def constant_eval():
    table = {"a": 1}
    key = "a"
    return eval(key, {}, table)


def register(registry, name, func):
    registry[name] = func
    return func
