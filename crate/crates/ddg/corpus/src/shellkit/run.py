import os
import subprocess


def system(command):
    return os.system(command)


def run_args(args, cwd):
    return subprocess.run(args, cwd=cwd, check=True)


def run_keyword(argv):
    completed = subprocess.run(args=argv, capture_output=True)
    return completed.returncode


def build_and_run(tool, *flags):
    cmd = [tool]
    cmd.extend(flags)
    return subprocess.run(cmd)


def quoted(command, quiet):
    line = command
    if quiet:
        line += " --quiet"
    os.system(line)


def with_env(argv, env):
    full = dict(os.environ)
    full.update(env)
    return subprocess.run(argv, env=full)


def sync_disks():
    os.system("sync")


def list_dir(verbose):
    args = ["ls"]
    if verbose:
        args = ["ls", "-l"]
    return subprocess.run(args)


def uptime(timeout):
    return subprocess.run(["uptime"], timeout=timeout)


def beep(times):
    for _ in range(times):
        os.system("true")


def quote(arg):
    return "'" + arg.replace("'", "") + "'"
