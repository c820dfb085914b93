//! Main-content extraction from article HTML.
//!
//! Every paragraph adds its text length to its parent element; the parent
//! with the highest total is taken as the article body. Pages without
//! paragraphs fall back to the visible body text.

use std::collections::HashMap;

use scraper::{ElementRef, Html, Selector};

const SKIP: &[&str] = &["script", "style", "nav", "header", "footer", "aside", "form", "noscript"];

fn inside_skipped(el: &ElementRef<'_>) -> bool {
    el.ancestors()
        .filter_map(ElementRef::wrap)
        .any(|a| SKIP.contains(&a.value().name()))
}

fn clean(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

pub fn main_text(html: &str) -> String {
    let doc = Html::parse_document(html);
    let p_sel = Selector::parse("p").expect("valid selector");
    let mut scores: HashMap<ego_tree::NodeId, usize> = HashMap::new();
    let mut order: Vec<ego_tree::NodeId> = Vec::new();
    for p in doc.select(&p_sel) {
        if inside_skipped(&p) {
            continue;
        }
        let len = clean(&p.text().collect::<String>()).len();
        if len < 25 {
            continue;
        }
        if let Some(parent) = p.parent() {
            let e = scores.entry(parent.id()).or_insert_with(|| {
                order.push(parent.id());
                0
            });
            *e += len;
        }
    }
    let best = order.iter().max_by_key(|id| (scores[*id], std::cmp::Reverse(order.iter().position(|o| o == *id))));
    if let Some(id) = best {
        let parent = ElementRef::wrap(doc.tree.get(*id).expect("node exists")).expect("element");
        let paras: Vec<String> = parent
            .children()
            .filter_map(ElementRef::wrap)
            .filter(|c| c.value().name() == "p")
            .map(|c| clean(&c.text().collect::<String>()))
            .filter(|t| !t.is_empty())
            .collect();
        let mut out = String::new();
        if let Some(title) = title(&doc) {
            out.push_str(&title);
            out.push_str("\n\n");
        }
        out.push_str(&paras.join("\n\n"));
        return out;
    }
    let body_sel = Selector::parse("body").expect("valid selector");
    let mut text = String::new();
    for b in doc.select(&body_sel) {
        for node in b.descendants() {
            if let Some(t) = node.value().as_text() {
                let parent_skipped = node
                    .ancestors()
                    .filter_map(ElementRef::wrap)
                    .any(|a| SKIP.contains(&a.value().name()));
                if !parent_skipped {
                    text.push_str(t);
                    text.push(' ');
                }
            }
        }
    }
    clean(&text)
}

fn title(doc: &Html) -> Option<String> {
    ["h1", "title"].into_iter().find_map(|tag| {
        let sel = Selector::parse(tag).expect("valid selector");
        doc.select(&sel)
            .map(|e| clean(&e.text().collect::<String>()))
            .find(|t| !t.is_empty())
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn picks_article_body_over_navigation() {
        let html = r#"<html><head><title>T</title></head><body>
            <nav><p>Home | World | Business | Markets | Opinion | Sport</p></nav>
            <div class="sidebar"><p>Subscribe now to read unlimited stories today.</p></div>
            <article><h1>Central bank holds rates</h1>
              <p>The central bank kept its main policy rate unchanged on Thursday, citing sticky services inflation.</p>
              <p>Markets had priced a small chance of a cut before the end of the year, analysts said.</p>
            </article>
            <script>var x = "<p>not text</p>";</script></body></html>"#;
        let t = main_text(html);
        assert!(t.starts_with("Central bank holds rates\n\n"));
        assert!(t.contains("sticky services inflation."));
        assert!(t.contains("\n\nMarkets had priced"));
        assert!(!t.contains("Subscribe"));
        assert!(!t.contains("Home |"));
    }

    #[test]
    fn falls_back_to_body_text() {
        assert_eq!(main_text("<html><body><div>short  note</div></body></html>"), "short note");
    }
}
