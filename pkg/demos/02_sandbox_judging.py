# Judging programs in the local sandbox
#
# run_tests executes a candidate program in a scratch directory, feeds
# each test's input on stdin, and compares stdout with the expected
# output (trailing whitespace per line and trailing blank lines are
# ignored). The verdict is one of AllPassed, WrongAnswer, RuntimeError,
# CompilationError, Timeout.

from nestflow.sandbox import ExecutionLimits, TestCase, format_report, run_tests

limits = ExecutionLimits(wall_time=2.0)

tests = [
    TestCase(input="2 3\n", expected_output="5\n"),
    TestCase(input="10 -4\n", expected_output="6\n"),
]

# A correct solution passes every test.

good = "a, b = map(int, input().split())\nprint(a + b)"
report = run_tests(good, tests, limits=limits)
print("correct program ->", report.verdict.value)
print(report.summary)
print()

# A wrong solution keeps running: wrong answers accumulate instead of
# stopping at the first failure, so the report can show all of them.

bad = "a, b = map(int, input().split())\nprint(a - b)"
report = run_tests(bad, tests, limits=limits)
print("wrong program ->", report.verdict.value)
for failure in report.failures:
    print(f"  test {failure.index}: expected {failure.expected!r}, got {failure.actual!r}")
print()

# Crashes and infinite loops stop at the first offending test.

crash = "raise SystemExit('the input made no sense')"
report = run_tests(crash, tests, limits=limits)
print("crashing program ->", report.verdict.value)
print()

spin = "while True:\n    pass"
report = run_tests(spin, tests, limits=ExecutionLimits(wall_time=0.5))
print("spinning program ->", report.verdict.value)
print()

# format_report renders a report as markdown. The same renderer
# produces the feedback a critic flow hands back to a generator, so its
# wording is part of the package contract.

report = run_tests(bad, tests[:1], limits=limits)
print(format_report(report))
