use std::sync::LazyLock;

use regex::Regex;

static SCRIPT: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?is)<script\b.*?</script\s*>").unwrap());
static STYLE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?is)<style\b.*?</style\s*>").unwrap());
static COMMENT: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?s)<!--.*?-->").unwrap());
static TAG: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"</?[A-Za-z!?][^<>]*>").unwrap());

fn strip_once(text: &str) -> String {
    let text = SCRIPT.replace_all(text, " ");
    let text = STYLE.replace_all(&text, " ");
    let text = COMMENT.replace_all(&text, " ");
    let text = TAG.replace_all(&text, " ");
    text.replace("&nbsp;", " ")
}

/// Turns raw page content into plain text: markup and script/style bodies
/// are removed, every whitespace run becomes one space, and the visible
/// text keeps its order.
pub fn preprocess_content(raw: &str) -> String {
    let mut text = raw.to_string();
    // removing one tag can expose another, e.g. "<scr<b>ipt>"
    loop {
        let next = strip_once(&text);
        if next == text {
            break;
        }
        text = next;
    }
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}
