//! Self-contained HTML reports for hierarchical explanations.
//!
//! Each document renders as stacked rows: the word-level scores first, then
//! one row per merge showing the current partition, ending at the full-span
//! root. Cells are colored on a diverging scale symmetric around zero with
//! limits at the document's maximum |value|; zero sits at the neutral
//! midpoint. No external assets.

use contexthate::explain::{ExplanationTree, PhraseSpan};

/// Blue–white–red diverging color for `value` in [−limit, +limit].
fn diverging_color(value: f64, limit: f64) -> String {
    let t = if limit > 0.0 { (value / limit).clamp(-1.0, 1.0) } else { 0.0 };
    let (r, g, b) = if t >= 0.0 {
        // white -> red
        (255.0, 255.0 - 195.0 * t, 255.0 - 195.0 * t)
    } else {
        // white -> blue
        (255.0 + 195.0 * t, 255.0 + 155.0 * t, 255.0)
    };
    format!("rgb({},{},{})", r as u8, g as u8, b as u8)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// The sequence of partitions the greedy agglomeration passed through,
/// reconstructed from node order (internal nodes were appended merge by
/// merge).
fn partition_states(tree: &ExplanationTree, token_count: usize) -> Vec<Vec<usize>> {
    let mut states = Vec::new();
    let mut active: Vec<usize> = (0..token_count).collect();
    states.push(active.clone());
    for idx in token_count..tree.nodes.len() {
        let Some((l, r)) = tree.nodes[idx].children else { continue };
        let pos = active.iter().position(|&n| n == l).expect("left child active");
        debug_assert_eq!(active[pos + 1], r);
        active[pos] = idx;
        active.remove(pos + 1);
        states.push(active.clone());
    }
    states
}

fn span_text(tokens: &[String], span: PhraseSpan) -> String {
    tokens[span.start..span.end].join(" ")
}

/// One document panel.
fn render_panel(title: &str, tokens: &[String], tree: &ExplanationTree) -> String {
    let limit = tree
        .nodes
        .iter()
        .map(|n| n.score.value.abs())
        .fold(0.0f64, f64::max);
    let mut html = format!("<div class=\"panel\"><h3>{}</h3>\n", escape(title));
    for state in partition_states(tree, tokens.len()) {
        html.push_str("<div class=\"row\">");
        for idx in state {
            let n = &tree.nodes[idx];
            html.push_str(&format!(
                "<span class=\"cell\" style=\"background:{}\" title=\"{} value={:.4} ± {:.4}\">{}</span>",
                diverging_color(n.score.value, limit),
                n.span,
                n.score.value,
                n.score.std_error,
                escape(&span_text(tokens, n.span)),
            ));
        }
        html.push_str("</div>\n");
    }
    // legend: gradient bar with symmetric limits
    html.push_str(&format!(
        "<div class=\"legend\"><span>{:.2}</span><span class=\"bar\"></span><span>+{:.2}</span></div>\n",
        -limit, limit
    ));
    html.push_str("</div>\n");
    html
}

/// A full report: one section per document, optionally two panels per
/// document for a before/after comparison.
pub fn render_report(
    title: &str,
    docs: &[(String, Vec<String>, ExplanationTree, Option<ExplanationTree>)],
) -> String {
    let mut html = String::from(
        "<!doctype html>\n<html><head><meta charset=\"utf-8\">\n",
    );
    html.push_str(&format!("<title>{}</title>\n", escape(title)));
    html.push_str(
        "<style>\n\
         body { font-family: sans-serif; margin: 2em; }\n\
         .doc { margin-bottom: 2.5em; }\n\
         .panels { display: flex; gap: 2em; flex-wrap: wrap; }\n\
         .panel { border: 1px solid #ccc; padding: 0.8em; }\n\
         .row { margin: 2px 0; white-space: nowrap; }\n\
         .cell { display: inline-block; padding: 2px 6px; margin: 1px; border: 1px solid #ddd; }\n\
         .legend { margin-top: 6px; display: flex; align-items: center; gap: 6px; font-size: 0.8em; }\n\
         .legend .bar { display: inline-block; width: 160px; height: 10px;\n\
           background: linear-gradient(to right, rgb(60,100,255), rgb(255,255,255), rgb(255,60,60)); }\n\
         </style></head><body>\n",
    );
    html.push_str(&format!("<h1>{}</h1>\n", escape(title)));
    for (id, tokens, tree, compare) in docs {
        html.push_str(&format!("<div class=\"doc\"><h2>{}</h2><div class=\"panels\">\n", escape(id)));
        let first_title = if compare.is_some() { "before" } else { "explanation" };
        html.push_str(&render_panel(first_title, tokens, tree));
        if let Some(other) = compare {
            html.push_str(&render_panel("after", tokens, other));
        }
        html.push_str("</div></div>\n");
    }
    html.push_str("</body></html>\n");
    html
}
