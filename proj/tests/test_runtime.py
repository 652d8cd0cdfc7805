import io
import json
import os
import subprocess
import sys
import tempfile
import unittest

sys.path.insert(0, os.path.join(os.path.dirname(os.path.abspath(__file__)), "..", "tools"))
import w4s_runtime as rt  # noqa: E402

RUNTIME = os.path.join(os.path.dirname(os.path.abspath(__file__)), "..", "tools", "w4s_runtime.py")


def frames(*objs):
    return io.StringIO("".join(json.dumps(o) + "\n" for o in objs))


class ChannelTest(unittest.TestCase):
    def test_out_of_order_replies_are_matched_by_id(self):
        out = io.StringIO()
        ch = rt.Channel(frames({"id": "h2", "ok": True, "result": "second"},
                               {"id": "h1", "ok": True, "result": "first"}), out)
        self.assertEqual(ch.request("call_llm", {}), "first")
        self.assertEqual(ch.request("call_llm", {}), "second")
        sent = [json.loads(line) for line in out.getvalue().splitlines()]
        self.assertEqual([f["id"] for f in sent], ["h1", "h2"])

    def test_error_reply_raises_named_exception(self):
        ch = rt.Channel(frames({"id": "h1", "ok": False, "error": {"kind": "NestedTimeout", "message": "slow"}}),
                        io.StringIO())
        with self.assertRaises(Exception) as ctx:
            ch.request("execute_code", {"code": "x"})
        self.assertEqual(type(ctx.exception).__name__, "NestedTimeout")
        self.assertEqual(str(ctx.exception), "slow")

    def test_closed_channel(self):
        ch = rt.Channel(io.StringIO(""), io.StringIO())
        with self.assertRaises(rt.ChannelClosed):
            ch.request("call_llm", {})


class AgentTest(unittest.TestCase):
    def test_positional_arguments_map_to_names(self):
        out = io.StringIO()
        agent = rt.Agent(rt.Channel(frames({"id": "h1", "ok": True, "result": ["x"]}), out))
        agent.call_llm([{"role": "user", "content": "hi"}], 0.2, 1, "Solver", instructions="be brief")
        args = json.loads(out.getvalue())["params"]["args"]
        self.assertEqual(args["temperature"], 0.2)
        self.assertEqual(args["agent_role"], "Solver")
        self.assertEqual(args["instructions"], "be brief")

    def test_unknown_helper(self):
        agent = rt.Agent(rt.Channel(io.StringIO(""), io.StringIO()))
        with self.assertRaises(Exception) as ctx:
            agent.run_shell("ls")
        self.assertEqual(type(ctx.exception).__name__, "UnknownHelper")


class ProcessTest(unittest.TestCase):
    def run_frames(self, *objs, seed="7"):
        with tempfile.TemporaryDirectory() as scratch:
            proc = subprocess.run([sys.executable, RUNTIME, scratch, seed], input=frames(*objs).getvalue(),
                                  capture_output=True, text=True, timeout=30)
        return proc, [json.loads(line) for line in proc.stdout.splitlines()]

    def test_done_frame_and_seeded_random(self):
        src = "import random\ndef workflow(agent, task):\n    print('noise')\n    return {'answer': random.random()}\n"
        run = {"id": "r", "method": "run_workflow", "params": {"source": src, "task": "t"}}
        proc, out = self.run_frames(run)
        self.assertEqual(proc.returncode, 0)
        self.assertEqual(len(out), 1)
        self.assertEqual(out[0]["method"], "done")
        self.assertIn("noise", proc.stderr)
        _, again = self.run_frames(run)
        self.assertEqual(out[0]["params"]["result"], again[0]["params"]["result"])

    def test_entry_point_is_passed(self):
        src = "def workflow(agent, task, entry_point):\n    return {'answer': entry_point}\n"
        _, out = self.run_frames({"id": "r", "method": "run_workflow",
                                  "params": {"source": src, "task": "t", "entry_point": "solve"}})
        self.assertEqual(out[0]["params"]["result"], {"answer": "solve"})

    def test_error_frame_has_redacted_trace(self):
        src = "def workflow(agent, task):\n    return {'answer': 1 / 0}\n"
        _, out = self.run_frames({"id": "r", "method": "run_workflow", "params": {"source": src, "task": "t"}})
        err = out[0]["params"]["error"]
        self.assertEqual(err["kind"], "ZeroDivisionError")
        self.assertIn('File "<workflow>", line 2', err["trace"])
        self.assertNotIn("w4s_runtime", err["trace"])

    def test_wrong_first_method(self):
        proc, out = self.run_frames({"id": "x", "method": "helper", "params": {}})
        self.assertEqual(proc.returncode, 1)
        self.assertEqual(out[0]["params"]["error"]["kind"], "ProtocolViolation")

    def test_host_closing_mid_call_exits_2(self):
        src = "def workflow(agent, task):\n    return {'answer': agent.call_llm('hi', 0.5, 1, 'R', '')}\n"
        proc, out = self.run_frames({"id": "r", "method": "run_workflow", "params": {"source": src, "task": "t"}})
        self.assertEqual(proc.returncode, 2)
        self.assertEqual(out[0]["method"], "helper")


if __name__ == "__main__":
    unittest.main()
