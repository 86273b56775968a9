//! Restricted tool-call grammar for `<code>` blocks.
//!
//! Only three named functions are interpreted: `search_local_documents`,
//! `web_search`, and `web_parse`. Within a code block the grammar accepts
//! string-literal assignments, calls to those functions (bare or assigned),
//! and `print(...)` of a known variable or literal. Everything else is
//! refused with a fixed feedback line; nothing is ever executed as real
//! code, and no failure is surfaced to the model — it all becomes feedback
//! text.

use serde::{Deserialize, Serialize};

use crate::retrieval::{Evidence, Retriever};

/// The documented refusal line for statements outside the grammar.
pub const UNSUPPORTED_FEEDBACK: &str = "unsupported statement: not executed";

/// The three interpreted tool functions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ToolFn {
    SearchLocalDocuments,
    WebSearch,
    WebParse,
}

impl ToolFn {
    fn from_name(name: &str) -> Option<Self> {
        match name {
            "search_local_documents" => Some(ToolFn::SearchLocalDocuments),
            "web_search" => Some(ToolFn::WebSearch),
            "web_parse" => Some(ToolFn::WebParse),
            _ => None,
        }
    }

    fn arity(&self) -> usize {
        match self {
            ToolFn::WebParse => 2,
            _ => 1,
        }
    }
}

/// One executed tool call.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ToolCall {
    pub function: ToolFn,
    pub args: Vec<String>,
    pub result: String,
}

/// Adapter behind `web_search` and `web_parse`. Live backends are out of
/// scope; the stub serves canned pages keyed by an indexed URL-like id.
pub trait WebAdapter: Send + Sync {
    fn web_search(&self, keywords: &str) -> Evidence;
    fn web_parse(&self, link: &str, query: &str) -> String;
}

/// Canned web adapter: a fixed page map, no network.
#[derive(Debug, Default)]
pub struct StubWebAdapter {
    pages: std::collections::BTreeMap<String, String>,
}

impl StubWebAdapter {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn with_pages<I: IntoIterator<Item = (String, String)>>(pages: I) -> Self {
        Self {
            pages: pages.into_iter().collect(),
        }
    }
}

impl WebAdapter for StubWebAdapter {
    fn web_search(&self, keywords: &str) -> Evidence {
        let needle = keywords.to_lowercase();
        let snippets = self
            .pages
            .iter()
            .filter(|(_, body)| body.to_lowercase().contains(&needle))
            .map(|(link, body)| crate::retrieval::Snippet {
                doc_id: link.clone(),
                text: body.clone(),
                score: 1.0,
            })
            .collect::<Vec<_>>();
        Evidence {
            query: keywords.to_string(),
            snippets,
            truncated: false,
        }
    }

    fn web_parse(&self, link: &str, _query: &str) -> String {
        self.pages
            .get(link)
            .cloned()
            .unwrap_or_else(|| "no content".to_string())
    }
}

/// Everything the tool executor routes to.
pub struct ToolContext<'a> {
    /// Local document index; `None` disables `search_local_documents`
    /// (the no-external-knowledge regime).
    pub retriever: Option<&'a dyn Retriever>,
    pub web: &'a dyn WebAdapter,
    pub query_top_k: usize,
    /// Incremented for every local-index query actually issued.
    pub retrieval_calls: std::cell::Cell<u64>,
}

impl<'a> ToolContext<'a> {
    pub fn new(
        retriever: Option<&'a dyn Retriever>,
        web: &'a dyn WebAdapter,
        query_top_k: usize,
    ) -> Self {
        Self {
            retriever,
            web,
            query_top_k,
            retrieval_calls: std::cell::Cell::new(0),
        }
    }
}

/// Scan generated text for `<code>...</code>` blocks and execute the tool
/// statements inside. Returns the executed calls and the feedback text to
/// append as a tool message; text without code blocks yields no calls and
/// empty feedback.
pub fn execute_tool_block(generated_text: &str, ctx: &ToolContext) -> (Vec<ToolCall>, String) {
    let mut calls = Vec::new();
    let mut feedback = Vec::new();
    for block in extract_code_blocks(generated_text) {
        run_block(&block, ctx, &mut calls, &mut feedback);
    }
    (calls, feedback.join("\n"))
}

fn extract_code_blocks(text: &str) -> Vec<String> {
    let mut blocks = Vec::new();
    let mut rest = text;
    while let Some(open) = rest.find("<code>") {
        let after = &rest[open + 6..];
        match after.find("</code>") {
            Some(close) => {
                blocks.push(after[..close].to_string());
                rest = &after[close + 7..];
            }
            None => break,
        }
    }
    blocks
}

fn run_block(
    block: &str,
    ctx: &ToolContext,
    calls: &mut Vec<ToolCall>,
    feedback: &mut Vec<String>,
) {
    let mut env: std::collections::BTreeMap<String, String> = std::collections::BTreeMap::new();
    for line in block.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        match parse_statement(line) {
            Some(Statement::Assign { name, value }) => match eval_expr(&value, &env, ctx, calls) {
                Some(result) => {
                    env.insert(name, result);
                }
                None => feedback.push(UNSUPPORTED_FEEDBACK.to_string()),
            },
            Some(Statement::Print(arg)) => match resolve_arg(&arg, &env) {
                Some(value) => feedback.push(value),
                None => feedback.push(UNSUPPORTED_FEEDBACK.to_string()),
            },
            Some(Statement::Bare(expr)) => match eval_expr(&expr, &env, ctx, calls) {
                Some(result) => feedback.push(result),
                None => feedback.push(UNSUPPORTED_FEEDBACK.to_string()),
            },
            None => feedback.push(UNSUPPORTED_FEEDBACK.to_string()),
        }
    }
}

enum Statement {
    Assign { name: String, value: Expr },
    Print(Arg),
    Bare(Expr),
}

enum Expr {
    Literal(String),
    Call { function: ToolFn, args: Vec<Arg> },
}

#[derive(Clone)]
enum Arg {
    Literal(String),
    Var(String),
}

fn parse_statement(line: &str) -> Option<Statement> {
    if let Some(rest) = strip_call(line, "print") {
        let args = parse_args(rest)?;
        if args.len() != 1 {
            return None;
        }
        return Some(Statement::Print(args.into_iter().next().unwrap()));
    }
    if let Some(eq) = find_top_level_eq(line) {
        let name = line[..eq].trim();
        if !is_ident(name) {
            return None;
        }
        let rhs = line[eq + 1..].trim();
        let value = parse_expr(rhs)?;
        return Some(Statement::Assign {
            name: name.to_string(),
            value,
        });
    }
    parse_expr(line).map(Statement::Bare)
}

/// Position of a bare `=` (not `==`) outside string literals.
fn find_top_level_eq(line: &str) -> Option<usize> {
    let bytes = line.as_bytes();
    let mut in_str: Option<u8> = None;
    let mut i = 0;
    while i < bytes.len() {
        let b = bytes[i];
        match in_str {
            Some(q) => {
                if b == q {
                    in_str = None;
                }
            }
            None => match b {
                b'"' | b'\'' => in_str = Some(b),
                b'=' => {
                    if i + 1 < bytes.len() && bytes[i + 1] == b'=' {
                        i += 2;
                        continue;
                    }
                    return Some(i);
                }
                _ => {}
            },
        }
        i += 1;
    }
    None
}

fn parse_expr(text: &str) -> Option<Expr> {
    if let Some(lit) = parse_string_literal(text) {
        return Some(Expr::Literal(lit));
    }
    for name in ["search_local_documents", "web_search", "web_parse"] {
        if let Some(rest) = strip_call(text, name) {
            let function = ToolFn::from_name(name)?;
            let args = parse_args(rest)?;
            return Some(Expr::Call { function, args });
        }
    }
    None
}

/// Matches `name( ... )` with nothing after the closing parenthesis, and
/// returns the argument text.
fn strip_call<'t>(text: &'t str, name: &str) -> Option<&'t str> {
    let rest = text.strip_prefix(name)?.trim_start();
    let rest = rest.strip_prefix('(')?;
    let rest = rest.strip_suffix(')')?;
    Some(rest)
}

fn parse_args(text: &str) -> Option<Vec<Arg>> {
    let text = text.trim();
    if text.is_empty() {
        return Some(Vec::new());
    }
    let mut args = Vec::new();
    for part in split_top_level_commas(text)? {
        let part = part.trim();
        if let Some(lit) = parse_string_literal(part) {
            args.push(Arg::Literal(lit));
        } else if is_ident(part) {
            args.push(Arg::Var(part.to_string()));
        } else {
            return None;
        }
    }
    Some(args)
}

fn split_top_level_commas(text: &str) -> Option<Vec<&str>> {
    let bytes = text.as_bytes();
    let mut parts = Vec::new();
    let mut in_str: Option<u8> = None;
    let mut start = 0;
    for (i, &b) in bytes.iter().enumerate() {
        match in_str {
            Some(q) => {
                if b == q {
                    in_str = None;
                }
            }
            None => match b {
                b'"' | b'\'' => in_str = Some(b),
                b',' => {
                    parts.push(&text[start..i]);
                    start = i + 1;
                }
                _ => {}
            },
        }
    }
    if in_str.is_some() {
        return None;
    }
    parts.push(&text[start..]);
    Some(parts)
}

fn parse_string_literal(text: &str) -> Option<String> {
    let text = text.trim();
    if text.len() < 2 {
        return None;
    }
    let quote = text.chars().next()?;
    if quote != '"' && quote != '\'' {
        return None;
    }
    let inner = &text[1..text.len() - 1];
    if !text.ends_with(quote) || inner.contains(quote) {
        return None;
    }
    Some(inner.to_string())
}

fn is_ident(text: &str) -> bool {
    !text.is_empty()
        && text
            .chars()
            .next()
            .map(|c| c.is_ascii_alphabetic() || c == '_')
            .unwrap_or(false)
        && text.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
}

fn resolve_arg(arg: &Arg, env: &std::collections::BTreeMap<String, String>) -> Option<String> {
    match arg {
        Arg::Literal(s) => Some(s.clone()),
        Arg::Var(name) => env.get(name).cloned(),
    }
}

fn eval_expr(
    expr: &Expr,
    env: &std::collections::BTreeMap<String, String>,
    ctx: &ToolContext,
    calls: &mut Vec<ToolCall>,
) -> Option<String> {
    match expr {
        Expr::Literal(s) => Some(s.clone()),
        Expr::Call { function, args } => {
            if args.len() != function.arity() {
                return None;
            }
            let mut resolved = Vec::with_capacity(args.len());
            for arg in args {
                resolved.push(resolve_arg(arg, env)?);
            }
            let result = dispatch(*function, &resolved, ctx);
            calls.push(ToolCall {
                function: *function,
                args: resolved,
                result: result.clone(),
            });
            Some(result)
        }
    }
}

fn dispatch(function: ToolFn, args: &[String], ctx: &ToolContext) -> String {
    match function {
        ToolFn::SearchLocalDocuments => match ctx.retriever {
            Some(retriever) => {
                ctx.retrieval_calls.set(ctx.retrieval_calls.get() + 1);
                match retriever.search_top_k(&args[0], ctx.query_top_k) {
                    Ok(evidence) => evidence.to_json(),
                    Err(e) => format!("search error: {e}"),
                }
            }
            None => "local documents unavailable".to_string(),
        },
        ToolFn::WebSearch => {
            let evidence = ctx.web.web_search(&args[0]);
            if evidence.snippets.is_empty() {
                "no results".to_string()
            } else {
                evidence.rendered()
            }
        }
        ToolFn::WebParse => ctx.web.web_parse(&args[0], &args[1]),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ctx_with_web(web: &StubWebAdapter) -> ToolContext<'_> {
        ToolContext::new(None, web, 3)
    }

    #[test]
    fn assignment_call_and_print() {
        let web = StubWebAdapter::with_pages([(
            "page1".to_string(),
            "watterson estimator details".to_string(),
        )]);
        let ctx = ctx_with_web(&web);
        let text = "<code>keywords=\"watterson\"\nresults=web_search(keywords)\nprint(results)</code>";
        let (calls, feedback) = execute_tool_block(text, &ctx);
        assert_eq!(calls.len(), 1);
        assert_eq!(calls[0].function, ToolFn::WebSearch);
        assert_eq!(calls[0].args, vec!["watterson"]);
        assert!(feedback.contains("watterson estimator details"));
    }

    #[test]
    fn arbitrary_computation_is_refused() {
        let web = StubWebAdapter::empty();
        let ctx = ctx_with_web(&web);
        let (calls, feedback) = execute_tool_block("<code>print(1+2)</code>", &ctx);
        assert!(calls.is_empty());
        assert_eq!(feedback, UNSUPPORTED_FEEDBACK);
    }

    #[test]
    fn text_without_code_blocks_is_inert() {
        let web = StubWebAdapter::empty();
        let ctx = ctx_with_web(&web);
        let (calls, feedback) = execute_tool_block("no code here", &ctx);
        assert!(calls.is_empty());
        assert!(feedback.is_empty());
    }

    #[test]
    fn local_search_routes_to_the_index() {
        use crate::retrieval::{Document, LexicalIndex, Retriever};
        let docs = vec![Document::new("d1", "", "watterson estimator theta four")];
        let index = LexicalIndex::build(&docs, 512).unwrap();
        let web = StubWebAdapter::empty();
        let ctx = ToolContext::new(Some(&index as &dyn Retriever), &web, 3);
        let block = "<code>query=\"watterson\"\ndocuments=search_local_documents(query)\nprint(documents)</code>";
        let (calls, feedback) = execute_tool_block(block, &ctx);
        assert_eq!(calls.len(), 1);
        assert_eq!(ctx.retrieval_calls.get(), 1);
        assert!(feedback.contains("d1"), "feedback: {feedback}");
    }

    #[test]
    fn local_search_disabled_without_retriever() {
        let web = StubWebAdapter::empty();
        let ctx = ctx_with_web(&web);
        let block = "<code>documents=search_local_documents(\"q\")\nprint(documents)</code>";
        let (calls, feedback) = execute_tool_block(block, &ctx);
        assert_eq!(calls.len(), 1);
        assert_eq!(ctx.retrieval_calls.get(), 0);
        assert!(feedback.contains("local documents unavailable"));
    }

    #[test]
    fn web_parse_takes_two_args() {
        let web = StubWebAdapter::with_pages([("link1".to_string(), "page body".to_string())]);
        let ctx = ctx_with_web(&web);
        let block =
            "<code>link=\"link1\"\nquery=\"what\"\nresults=web_parse(link, query)\nprint(results)</code>";
        let (calls, feedback) = execute_tool_block(block, &ctx);
        assert_eq!(calls.len(), 1);
        assert_eq!(feedback, "page body");
        // Unknown link falls back to the stub's no-content answer.
        let block = "<code>r=web_parse(\"nope\", \"q\")\nprint(r)</code>";
        let (_, feedback) = execute_tool_block(block, &ctx);
        assert_eq!(feedback, "no content");
    }

    #[test]
    fn undefined_variable_is_refused() {
        let web = StubWebAdapter::empty();
        let ctx = ctx_with_web(&web);
        let (calls, feedback) = execute_tool_block("<code>r=web_search(missing)</code>", &ctx);
        assert!(calls.is_empty());
        assert_eq!(feedback, UNSUPPORTED_FEEDBACK);
    }

    #[test]
    fn wrong_arity_is_refused() {
        let web = StubWebAdapter::empty();
        let ctx = ctx_with_web(&web);
        let (calls, feedback) =
            execute_tool_block("<code>r=web_parse(\"only-one\")</code>", &ctx);
        assert!(calls.is_empty());
        assert_eq!(feedback, UNSUPPORTED_FEEDBACK);
    }

    #[test]
    fn multiple_blocks_all_execute() {
        let web = StubWebAdapter::with_pages([("p".to_string(), "alpha beta".to_string())]);
        let ctx = ctx_with_web(&web);
        let text = "start <code>web_search(\"alpha\")</code> middle <code>web_search(\"beta\")</code> end";
        let (calls, _) = execute_tool_block(text, &ctx);
        assert_eq!(calls.len(), 2);
    }
}
