//! Prompt fixtures for the repair pipeline. Slots are `{name}` markers
//! replaced by [`fill`].

pub const SYSTEM: &str = "You are an experienced hardware engineer who writes and reviews Verilog.";

pub const ERROR_REPORT: &str = "Here is a Verilog problem description:
```
{problem description}
```

Here is an erroneous implementation:
```
{error code}
```

Here is a correct implementation:
```
{correct code}
```

Generate a detail error report.
The error report should describe the common error type and output the code category. The error report should also be detailed enough to let beginners to repair the erroneous implementation step by step.

Output:
";

pub const SELF_CONSISTENCY: &str = "Here is a Verilog problem description:
```
{problem description}
```

Here is an erroneous implementation:
```
{error code}
```

Here is the error report:
```
{error report}
```

Now fix the erroneous implementation and give me the correct code.

Output:
";

pub const INJECTION: &str = "Your goal is to create an error-fixing Verilog practice problem for programmers. You will demonstrate a type of error that is commonly made by programmers.
Create an error repair practice problem with three components:
1. Problem description
2. Erroneous implementation
3. Hints for fixing

Here is an example:

<EXAMPLE>
The following Verilog module is intended to implement the specification below. However, there is a bug in the code which causes incorrect results. Please fix the bug to make the module work as intended.

Erroneous Implementation:

```verilog
// Verilog code with the injected error
module example_module (
    input wire clk,
    input wire reset,
    output reg [3:0] counter
);

// Intended functionality:
// This module should count from 0 to 15 and then wrap around.

always @(posedge clk or posedge reset) begin
    if (reset) begin
        counter <= 4'b0000;
    end else begin
        counter <= counter + 1'b1; // Error injected: Should be 4'b1
    end
end

endmodule
```
Hints for Fixing:
1. Verify the bit-width of the counter and the increment operation.
2. Check the initialization and wrapping condition of the counter.
3. Ensure that the addition operation correctly handles the 4-bit counter.

</EXAMPLE>

Now, here is the commonly made error:

```
{error report}
```

Inject the above error into the following module and create an error repair practice problem. Check if it is possible to inject the error. If not, create the problem with the given error alone and ignore the module in the code snippet.

```
{code snippet}
```

Output:
";

/// Appended on the single retry after an unparseable report.
pub const REPORT_FORMAT_REMINDER: &str = "

Your previous answer could not be read. Answer again using exactly these headings:
Error Type: <short phrase>
Category: <category, for example Sequential: shift registers>
Description:
<what is wrong and the numbered steps to repair it>
";

/// Appended on the single retry after an unparseable injection answer.
pub const INJECTION_FORMAT_REMINDER: &str = "

Your previous answer could not be read. Answer again using exactly these headings, each code block fenced with ```:
Problem Description:
Erroneous Implementation:
Hints for Fixing:
Output:
(the corrected module)
";

/// Replaces each `{key}` with its value. Values are inserted verbatim, so
/// a value containing a slot marker is never expanded twice.
pub fn fill(template: &str, slots: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    'scan: while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open..];
        for (key, value) in slots {
            let marker = format!("{{{key}}}");
            if after.starts_with(&marker) {
                out.push_str(value.trim_matches('\n'));
                rest = &after[marker.len()..];
                continue 'scan;
            }
        }
        out.push('{');
        rest = &after[1..];
    }
    out.push_str(rest);
    out
}
