"""
Reading and writing agent steps
===============================

Every model completion is one step. A step either calls a tool or answers.
"""

from viotbench import Final, ToolCall, parse_step, render_step

# A tool call renders to three lines.
call = ToolCall("FaceRecognition", "suspect_A.jpg, Cairo")
text = render_step(call)
print(text)

# Parsing gives the action back.
assert parse_step(text) == call

# The answer form has two lines.
print(render_step(Final("suspect_A was seen in Cairo.")))

# Models are sloppy with whitespace. Lenient mode forgives it; strict does not.
sloppy = "  Thought:   Do I need to use a tool?  Yes\n\nAction:\tFaceRecognition\nAction Input:  suspect_A.jpg,  Cairo "
print(parse_step(sloppy, "lenient"))
print(parse_step(sloppy, "strict"))

# Anything else is a violation with a reason.
print(parse_step("Sure! Let me look at the cameras.", "lenient"))
