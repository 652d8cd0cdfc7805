#!/usr/bin/env python3
"""Workflow runtime: executes one workflow program per process lifetime.

Usage: w4s_runtime.py <scratch_dir> <seed>

Speaks newline-delimited JSON frames with the host over stdin/stdout. The
workflow's own prints are redirected to stderr so they cannot corrupt the
channel.
"""
import json
import os
import random
import sys
import traceback

HELPERS = {
    "call_llm": ("messages", "temperature", "num_of_response", "agent_role", "instructions"),
    "call_json_format_llm": (
        "messages", "temperature", "num_of_response", "agent_role", "return_dict_keys", "instructions",
    ),
    "execute_code": ("code",),
    "extract_answer_str": ("response",),
    "extract_code_block": ("response", "entry_point"),
    "test_on_public_test": ("task", "solution_code", "entry_point", "test_loop"),
}

MAX_TRACE_FRAMES = 10
_error_types = {}


def error_type(kind):
    if kind not in _error_types:
        _error_types[kind] = type(kind, (Exception,), {})
    return _error_types[kind]


class ChannelClosed(Exception):
    pass


class Channel:
    def __init__(self, inp, out):
        self.inp = inp
        self.out = out
        self.pending = {}
        self.counter = 0

    def send(self, frame):
        self.out.write(json.dumps(frame, default=repr) + "\n")
        self.out.flush()

    def read_frame(self):
        line = self.inp.readline()
        if not line:
            raise ChannelClosed("host closed the channel")
        return json.loads(line)

    def request(self, name, args):
        self.counter += 1
        frame_id = "h%d" % self.counter
        self.send({"id": frame_id, "method": "helper", "params": {"name": name, "args": args}})
        # Replies are matched by id; anything else is parked until asked for.
        while frame_id not in self.pending:
            frame = self.read_frame()
            self.pending[frame.get("id")] = frame
        reply = self.pending.pop(frame_id)
        if reply.get("ok"):
            return reply.get("result")
        err = reply.get("error") or {}
        raise error_type(err.get("kind", "HelperError"))(err.get("message", ""))


class Agent:
    def __init__(self, channel):
        self._channel = channel

    def __getattr__(self, name):
        if name.startswith("_") or name not in HELPERS:
            raise error_type("UnknownHelper")("no helper named %r" % name)
        params = HELPERS[name]

        def call(*args, **kwargs):
            if len(args) > len(params):
                raise TypeError("%s takes at most %d arguments" % (name, len(params)))
            payload = dict(zip(params, args))
            payload.update(kwargs)
            return self._channel.request(name, payload)

        call.__name__ = name
        return call


def redacted_trace(tb, scratch):
    frames = traceback.extract_tb(tb)
    frames = [f for f in frames if f.filename == "<workflow>"] or frames[-1:]
    lines = []
    for f in frames[-MAX_TRACE_FRAMES:]:
        filename = f.filename
        if filename != "<workflow>" and not filename.startswith(scratch):
            filename = os.path.basename(filename)
        lines.append('File "%s", line %d, in %s' % (filename, f.lineno, f.name))
        if f.line:
            lines.append("    " + f.line)
    return "\n".join(lines)


def run(channel, frame, scratch):
    params = frame.get("params") or {}
    source = params.get("source", "")
    namespace = {"__name__": "__workflow__"}
    exec(compile(source, "<workflow>", "exec"), namespace)
    fn = namespace.get("workflow")
    if not callable(fn):
        raise error_type("MissingEntryFunction")("source does not define workflow()")
    agent = Agent(channel)
    if "entry_point" in params:
        return fn(agent, params.get("task", ""), params["entry_point"])
    return fn(agent, params.get("task", ""))


def main(argv):
    scratch = os.path.realpath(argv[1]) if len(argv) > 1 else os.getcwd()
    seed = int(argv[2]) if len(argv) > 2 else 0
    os.chdir(scratch)
    random.seed(seed)

    channel = Channel(sys.stdin, sys.stdout)
    sys.stdout = sys.stderr

    frame = channel.read_frame()
    frame_id = frame.get("id")
    if frame.get("method") != "run_workflow":
        channel.send({"id": frame_id, "method": "done",
                      "params": {"error": {"kind": "ProtocolViolation", "message": "expected run_workflow",
                                           "trace": ""}}})
        return 1
    try:
        result = run(channel, frame, scratch)
    except ChannelClosed:
        return 2
    except BaseException as e:  # every failure becomes one error frame
        channel.send({"id": frame_id, "method": "done",
                      "params": {"error": {"kind": type(e).__name__, "message": str(e),
                                           "trace": redacted_trace(e.__traceback__, scratch)}}})
        return 0
    channel.send({"id": frame_id, "method": "done", "params": {"result": result}})
    return 0


if __name__ == "__main__":
    sys.exit(main(sys.argv))
