import os
import subprocess

STATUS_COMMAND = "true"
ALLOWED = ("build", "test")
ALLOWED_COMMANDS = {"default": ["true"]}


class Job:
    def start(self, argv):
        self.argv = list(argv)
        self.proc = subprocess.run(self.argv)


def run_all(commands):
    for command in commands:
        os.system(command)


def retry(command, attempts):
    count = 0
    while count < attempts:
        status = os.system(command)
        if status == 0:
            return True
        count += 1
    return False


def status(name):
    code = os.system(STATUS_COMMAND)
    return name, code


def check_tool(tool):
    if tool not in ALLOWED:
        raise ValueError(tool)
    return subprocess.run(ALLOWED_COMMANDS["default"])


def echo_banner(width):
    banner = "=" * 10
    print(banner.center(width))
    os.system("true")


class Task:
    def __init__(self, command_line):
        self.command_line = command_line

    def execute(self):
        return os.system(self.command_line)
