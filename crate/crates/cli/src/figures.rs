//! Hand-rolled SVG figures. Every renderer is a pure function of the
//! serialized artifacts, so `plot` reproduces byte-identical files from a
//! saved result bundle.

use crate::artifacts::{
    CurveRow, MedianTestReport, ModelRow, OutcomeReport, PosteriorReport, RunReport,
};

const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf",
];
const GRAY: &str = "#9aa0a6";
const DARK: &str = "#202124";

fn color(i: usize) -> &'static str {
    PALETTE[i % PALETTE.len()]
}

fn px(x: f64) -> String {
    format!("{x:.2}")
}

struct Canvas {
    body: String,
}

impl Canvas {
    fn new(width: f64, height: f64) -> Self {
        let mut body = String::new();
        body.push_str(&format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" \
             viewBox=\"0 0 {w} {h}\" font-family=\"Helvetica, Arial, sans-serif\">\n",
            w = px(width),
            h = px(height)
        ));
        body.push_str(&format!(
            "<rect x=\"0\" y=\"0\" width=\"{}\" height=\"{}\" fill=\"#ffffff\"/>\n",
            px(width),
            px(height)
        ));
        Canvas { body }
    }

    fn finish(mut self) -> String {
        self.body.push_str("</svg>\n");
        self.body
    }

    fn line(&mut self, x1: f64, y1: f64, x2: f64, y2: f64, stroke: &str, width: f64) {
        self.body.push_str(&format!(
            "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"{stroke}\" \
             stroke-width=\"{}\"/>\n",
            px(x1),
            px(y1),
            px(x2),
            px(y2),
            px(width)
        ));
    }

    fn dashed(&mut self, x1: f64, y1: f64, x2: f64, y2: f64, stroke: &str) {
        self.body.push_str(&format!(
            "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"{stroke}\" \
             stroke-width=\"1\" stroke-dasharray=\"4 3\"/>\n",
            px(x1),
            px(y1),
            px(x2),
            px(y2)
        ));
    }

    fn rect(&mut self, x: f64, y: f64, w: f64, h: f64, fill: &str, opacity: f64) {
        self.body.push_str(&format!(
            "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"{fill}\" \
             fill-opacity=\"{}\"/>\n",
            px(x),
            px(y),
            px(w.max(0.0)),
            px(h.max(0.0)),
            px(opacity)
        ));
    }

    fn circle(&mut self, cx: f64, cy: f64, r: f64, fill: &str, opacity: f64) {
        self.body.push_str(&format!(
            "<circle cx=\"{}\" cy=\"{}\" r=\"{}\" fill=\"{fill}\" fill-opacity=\"{}\"/>\n",
            px(cx),
            px(cy),
            px(r),
            px(opacity)
        ));
    }

    fn ring(&mut self, cx: f64, cy: f64, r: f64, stroke: &str) {
        self.body.push_str(&format!(
            "<circle cx=\"{}\" cy=\"{}\" r=\"{}\" fill=\"none\" stroke=\"{stroke}\" \
             stroke-width=\"1.5\"/>\n",
            px(cx),
            px(cy),
            px(r)
        ));
    }

    fn text(&mut self, x: f64, y: f64, s: &str, size: f64, anchor: &str, fill: &str) {
        let escaped = s
            .replace('&', "&amp;")
            .replace('<', "&lt;")
            .replace('>', "&gt;");
        self.body.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-size=\"{}\" text-anchor=\"{anchor}\" \
             fill=\"{fill}\">{escaped}</text>\n",
            px(x),
            px(y),
            px(size)
        ));
    }
}

/// Linear map from data to pixel coordinates.
#[derive(Clone, Copy)]
struct Scale {
    d0: f64,
    d1: f64,
    r0: f64,
    r1: f64,
}

impl Scale {
    fn new(d0: f64, d1: f64, r0: f64, r1: f64) -> Self {
        let (d0, d1) = if (d1 - d0).abs() < 1e-300 {
            (d0 - 0.5, d1 + 0.5)
        } else {
            (d0, d1)
        };
        Scale { d0, d1, r0, r1 }
    }

    fn at(&self, x: f64) -> f64 {
        self.r0 + (x - self.d0) / (self.d1 - self.d0) * (self.r1 - self.r0)
    }
}

/// Round tick positions covering `[lo, hi]`.
fn ticks(lo: f64, hi: f64, target: usize) -> Vec<f64> {
    let span = (hi - lo).max(1e-12);
    let raw = span / target.max(2) as f64;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 2.5, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| span / s <= target as f64)
        .unwrap_or(10.0 * mag);
    let mut t = (lo / step).ceil() * step;
    let mut out = Vec::new();
    while t <= hi + 1e-9 * span {
        out.push(if t.abs() < step * 1e-9 { 0.0 } else { t });
        t += step;
    }
    out
}

fn fmt_tick(x: f64) -> String {
    if x == x.trunc() && x.abs() < 1e6 {
        format!("{}", x as i64)
    } else {
        format!("{x:.3}")
            .trim_end_matches('0')
            .trim_end_matches('.')
            .to_string()
    }
}

struct Panel {
    x: f64,
    y: f64,
    w: f64,
    h: f64,
}

impl Panel {
    fn frame(&self, c: &mut Canvas, title: &str) {
        c.rect(self.x, self.y, self.w, self.h, "#fafafa", 1.0);
        c.line(self.x, self.y + self.h, self.x + self.w, self.y + self.h, DARK, 1.0);
        c.line(self.x, self.y, self.x, self.y + self.h, DARK, 1.0);
        c.text(self.x, self.y - 8.0, title, 13.0, "start", DARK);
    }

    fn y_axis(&self, c: &mut Canvas, scale: &Scale, lo: f64, hi: f64) {
        for t in ticks(lo, hi, 5) {
            let y = scale.at(t);
            c.line(self.x - 3.0, y, self.x, y, DARK, 1.0);
            c.text(self.x - 6.0, y + 3.5, &fmt_tick(t), 10.0, "end", DARK);
        }
    }

    fn x_axis(&self, c: &mut Canvas, scale: &Scale, lo: f64, hi: f64) {
        for t in ticks(lo, hi, 6) {
            let x = scale.at(t);
            c.line(x, self.y + self.h, x, self.y + self.h + 3.0, DARK, 1.0);
            c.text(x, self.y + self.h + 14.0, &fmt_tick(t), 10.0, "middle", DARK);
        }
    }
}

fn finite_range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for v in values.filter(|v| v.is_finite()) {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if lo > hi {
        (0.0, 1.0)
    } else {
        (lo, hi)
    }
}

fn pad(lo: f64, hi: f64) -> (f64, f64) {
    let span = (hi - lo).max(1e-9);
    (lo - 0.06 * span, hi + 0.06 * span)
}

fn density_outline(
    c: &mut Canvas,
    xs: &Scale,
    y_base: f64,
    height: f64,
    p: &PosteriorReport,
    col: &str,
) {
    let d = &p.density;
    let max_count = d.counts.iter().copied().max().unwrap_or(0).max(1) as f64;
    if !d.counts.is_empty() {
        let bin_w = (d.hi - d.lo) / d.counts.len() as f64;
        for (i, &count) in d.counts.iter().enumerate() {
            if count == 0 {
                continue;
            }
            let x0 = xs.at(d.lo + bin_w * i as f64);
            let x1 = xs.at(d.lo + bin_w * (i as f64 + 1.0));
            let h = height * (count as f64 / max_count) * (1.0 - d.point_mass);
            c.rect(x0, y_base - h, x1 - x0, h, col, 0.45);
        }
    }
    // Spike at zero, scaled by the exclusion probability.
    if d.point_mass > 0.0 {
        let x = xs.at(0.0);
        let h = height * d.point_mass;
        c.line(x, y_base, x, y_base - h, col, 3.0);
    }
}

/// Four panels: averaged posterior, per-model estimates, model scores, and
/// the block-inclusion grid for the displayed models.
pub fn single_outcome_svg(report: &OutcomeReport, models: &[ModelRow], top: usize) -> String {
    let shown: Vec<&ModelRow> = models
        .iter()
        .filter(|m| m.outcome == report.outcome)
        .take(top)
        .collect();
    let mut c = Canvas::new(960.0, 760.0);
    c.text(
        20.0,
        26.0,
        &format!("{} ({}, {})", report.outcome, report.family, report.engine),
        15.0,
        "start",
        DARK,
    );

    // Posterior panel: densities plus point/interval rows per treatment.
    let p1 = Panel {
        x: 70.0,
        y: 60.0,
        w: 380.0,
        h: 260.0,
    };
    p1.frame(&mut c, "model-averaged posterior");
    let (lo, hi) = pad_with_zero(finite_range(report.treatments.iter().flat_map(|t| {
        [
            t.posterior.density.lo,
            t.posterior.density.hi,
            t.posterior.lower,
            t.posterior.upper,
        ]
        .into_iter()
    })));
    let xs = Scale::new(lo, hi, p1.x + 4.0, p1.x + p1.w - 4.0);
    p1.x_axis(&mut c, &xs, lo, hi);
    c.dashed(xs.at(0.0), p1.y, xs.at(0.0), p1.y + p1.h, GRAY);
    let base = p1.y + p1.h - 30.0;
    for (i, t) in report.treatments.iter().enumerate() {
        density_outline(&mut c, &xs, base, p1.h - 60.0, &t.posterior, color(i));
        let y = base + 8.0 + 7.0 * i as f64;
        c.line(xs.at(t.posterior.lower), y, xs.at(t.posterior.upper), y, color(i), 2.0);
        c.circle(xs.at(t.posterior.mean), y, 3.0, color(i), 1.0);
        c.text(
            p1.x + 6.0,
            p1.y + 16.0 + 13.0 * i as f64,
            &format!(
                "{}: mean {:.3} [{:.3}, {:.3}] p_inc {:.3}",
                t.treatment, t.posterior.mean, t.posterior.lower, t.posterior.upper,
                t.posterior.p_inc
            ),
            11.0,
            "start",
            color(i),
        );
    }

    // Per-model estimates, marker area proportional to weight.
    let p2 = Panel {
        x: 540.0,
        y: 60.0,
        w: 380.0,
        h: 260.0,
    };
    p2.frame(
        &mut c,
        &format!("estimates of the {} best models", shown.len()),
    );
    let n_shown = shown.len().max(1) as f64;
    let rank_s = Scale::new(1.0, n_shown.max(2.0), p2.x + 14.0, p2.x + p2.w - 8.0);
    let (elo, ehi) = pad_with_zero(finite_range(shown.iter().flat_map(|m| {
        m.treatments
            .iter()
            .filter_map(|(_, e, _)| *e)
            .collect::<Vec<_>>()
            .into_iter()
    })));
    let es = Scale::new(elo, ehi, p2.y + p2.h - 8.0, p2.y + 8.0);
    p2.y_axis(&mut c, &es, elo, ehi);
    c.dashed(p2.x, es.at(0.0), p2.x + p2.w, es.at(0.0), GRAY);
    let max_w = shown
        .iter()
        .map(|m| m.weight)
        .fold(0.0f64, f64::max)
        .max(1e-12);
    for m in &shown {
        let x = rank_s.at(m.rank as f64);
        for (ti, (_, est, se)) in m.treatments.iter().enumerate() {
            if let (Some(est), Some(se)) = (est, se) {
                let r = 1.5 + 6.5 * (m.weight / max_w).sqrt();
                c.line(x, es.at(est - 1.96 * se), x, es.at(est + 1.96 * se), color(ti), 0.6);
                c.circle(x, es.at(*est), r, color(ti), 0.75);
            }
        }
    }
    c.text(
        p2.x + p2.w / 2.0,
        p2.y + p2.h + 28.0,
        "models by posterior weight (best first)",
        11.0,
        "middle",
        DARK,
    );

    // Model scores.
    let p3 = Panel {
        x: 70.0,
        y: 400.0,
        w: 380.0,
        h: 260.0,
    };
    p3.frame(&mut c, "model scores (lower is better)");
    let (slo, shi) = pad(
        finite_range(shown.iter().map(|m| m.ebic)).0,
        finite_range(shown.iter().map(|m| m.ebic)).1,
    );
    let ss = Scale::new(slo, shi, p3.y + p3.h - 8.0, p3.y + 8.0);
    let rank3 = Scale::new(1.0, n_shown.max(2.0), p3.x + 14.0, p3.x + p3.w - 8.0);
    p3.y_axis(&mut c, &ss, slo, shi);
    for m in &shown {
        if m.ebic.is_finite() {
            c.circle(rank3.at(m.rank as f64), ss.at(m.ebic), 2.0, DARK, 0.8);
        }
    }

    // Inclusion grid.
    let p4 = Panel {
        x: 540.0,
        y: 400.0,
        w: 380.0,
        h: 260.0,
    };
    p4.frame(&mut c, "block inclusion");
    let block_names: Vec<&str> = shown
        .first()
        .map(|m| m.blocks.iter().map(|(n, _)| n.as_str()).collect())
        .unwrap_or_default();
    let rows = block_names.len().max(1) as f64;
    let cell_h = (p4.h - 10.0) / rows;
    let cell_w = (p4.w - 10.0) / n_shown;
    for (bi, name) in block_names.iter().enumerate() {
        let y = p4.y + 5.0 + cell_h * bi as f64;
        c.text(
            p4.x + p4.w + 4.0,
            y + cell_h / 2.0 + 3.5,
            name,
            10.0,
            "start",
            DARK,
        );
        for (mi, m) in shown.iter().enumerate() {
            if m.blocks[bi].1 {
                c.rect(
                    p4.x + 5.0 + cell_w * mi as f64,
                    y + 1.0,
                    (cell_w - 1.0).max(0.4),
                    (cell_h - 2.0).max(0.4),
                    "#4c72b0",
                    0.9,
                );
            }
        }
    }

    // Legend.
    for (i, t) in report.treatments.iter().enumerate() {
        let y = 40.0 + 0.0 * i as f64;
        let x = 540.0 + 110.0 * i as f64;
        c.circle(x, y - 4.0, 4.0, color(i), 1.0);
        c.text(x + 8.0, y, &t.treatment, 11.0, "start", DARK);
    }
    c.finish()
}

fn pad_with_zero(range: (f64, f64)) -> (f64, f64) {
    pad(range.0.min(0.0), range.1.max(0.0))
}

/// Forest plot of treatment-by-outcome effects with the overall average.
pub fn multi_outcome_svg(run: &RunReport) -> String {
    struct Row {
        label: String,
        p: PosteriorReport,
        col: usize,
        emphasized: bool,
    }
    let mut rows: Vec<Row> = Vec::new();
    for o in &run.outcomes {
        for (ti, t) in o.treatments.iter().enumerate() {
            rows.push(Row {
                label: format!("{} : {}", o.outcome, t.treatment),
                p: t.posterior.clone(),
                col: ti,
                emphasized: false,
            });
        }
    }
    if let Some(g) = &run.gate {
        for (ti, p) in g.per_treatment.iter().enumerate() {
            rows.push(Row {
                label: format!("average : {}", p.target),
                p: p.clone(),
                col: ti,
                emphasized: false,
            });
        }
        rows.push(Row {
            label: "overall average".into(),
            p: g.overall.clone(),
            col: 0,
            emphasized: true,
        });
    }

    let height = 120.0 + 24.0 * rows.len() as f64;
    let mut c = Canvas::new(820.0, height);
    c.text(20.0, 26.0, "treatment effects across outcomes", 15.0, "start", DARK);
    let panel = Panel {
        x: 250.0,
        y: 50.0,
        w: 520.0,
        h: height - 110.0,
    };
    panel.frame(&mut c, "");
    let (lo, hi) = pad_with_zero(finite_range(
        rows.iter().flat_map(|r| [r.p.lower, r.p.upper].into_iter()),
    ));
    let xs = Scale::new(lo, hi, panel.x + 8.0, panel.x + panel.w - 8.0);
    panel.x_axis(&mut c, &xs, lo, hi);
    c.dashed(xs.at(0.0), panel.y, xs.at(0.0), panel.y + panel.h, GRAY);
    if let Some(g) = &run.gate {
        let x = xs.at(g.overall.mean);
        c.dashed(x, panel.y, x, panel.y + panel.h, "#d62728");
    }
    for (i, r) in rows.iter().enumerate() {
        let y = panel.y + 18.0 + 24.0 * i as f64;
        let col = if r.emphasized { "#d62728" } else { color(r.col) };
        c.text(panel.x - 8.0, y + 4.0, &r.label, 11.0, "end", DARK);
        c.line(xs.at(r.p.lower), y, xs.at(r.p.upper), y, col, 2.0);
        if r.emphasized {
            c.rect(xs.at(r.p.mean) - 4.0, y - 4.0, 8.0, 8.0, col, 1.0);
        } else {
            c.circle(xs.at(r.p.mean), y, 3.5, col, 1.0);
        }
        c.text(
            panel.x + panel.w + 6.0,
            y + 4.0,
            &format!("{:.3}", r.p.p_inc),
            10.0,
            "start",
            GRAY,
        );
    }
    c.text(
        panel.x + panel.w + 6.0,
        panel.y - 6.0,
        "p_inc",
        10.0,
        "start",
        GRAY,
    );
    c.finish()
}

/// Member and non-member effects for every treatment-subgroup pair.
pub fn subgroup_svg(report: &OutcomeReport) -> String {
    let cells = &report.subgroups;
    let height = 130.0 + 46.0 * cells.len() as f64;
    let mut c = Canvas::new(820.0, height);
    c.text(
        20.0,
        26.0,
        &format!("subgroup effects on {}", report.outcome),
        15.0,
        "start",
        DARK,
    );
    let panel = Panel {
        x: 230.0,
        y: 50.0,
        w: 460.0,
        h: height - 110.0,
    };
    panel.frame(&mut c, "");
    let (lo, hi) = pad_with_zero(finite_range(cells.iter().flat_map(|s| {
        [
            s.member.lower,
            s.member.upper,
            s.non_member.lower,
            s.non_member.upper,
        ]
        .into_iter()
    })));
    let xs = Scale::new(lo, hi, panel.x + 8.0, panel.x + panel.w - 8.0);
    panel.x_axis(&mut c, &xs, lo, hi);
    c.dashed(xs.at(0.0), panel.y, xs.at(0.0), panel.y + panel.h, GRAY);
    for (i, s) in cells.iter().enumerate() {
        let y = panel.y + 24.0 + 46.0 * i as f64;
        c.text(
            panel.x - 8.0,
            y + 10.0,
            &format!("{} | {}", s.treatment, s.subgroup),
            11.0,
            "end",
            DARK,
        );
        c.line(xs.at(s.member.lower), y, xs.at(s.member.upper), y, color(0), 2.0);
        c.circle(xs.at(s.member.mean), y, 3.5, color(0), 1.0);
        let y2 = y + 14.0;
        c.line(
            xs.at(s.non_member.lower),
            y2,
            xs.at(s.non_member.upper),
            y2,
            color(1),
            2.0,
        );
        c.ring(xs.at(s.non_member.mean), y2, 3.5, color(1));
        c.text(
            panel.x + panel.w + 6.0,
            y + 8.0,
            &format!("gap {:.3} (p_inc {:.3})", s.delta.mean, s.delta.p_inc),
            10.0,
            "start",
            GRAY,
        );
    }
    // Legend.
    c.circle(panel.x + 8.0, height - 40.0, 3.5, color(0), 1.0);
    c.text(panel.x + 16.0, height - 36.0, "members", 11.0, "start", DARK);
    c.ring(panel.x + 98.0, height - 40.0, 3.5, color(1));
    c.text(panel.x + 106.0, height - 36.0, "non-members", 11.0, "start", DARK);
    c.finish()
}

/// Classic curve: sorted estimates on top, the design grid underneath.
pub fn sca_svg(rows: &[CurveRow], test: Option<&MedianTestReport>) -> String {
    let mut order: Vec<usize> = (0..rows.len()).collect();
    order.sort_by(|&i, &j| {
        rows[i]
            .estimate
            .partial_cmp(&rows[j].estimate)
            .expect("finite estimates")
            .then(i.cmp(&j))
    });

    // Grid rows: every treatment, then every control that appears.
    let mut treatments: Vec<&str> = Vec::new();
    let mut controls: Vec<&str> = Vec::new();
    for r in rows {
        if !treatments.contains(&r.treatment.as_str()) {
            treatments.push(&r.treatment);
        }
        for ctrl in r.controls.split('+').filter(|s| !s.is_empty()) {
            if !controls.contains(&ctrl) {
                controls.push(ctrl);
            }
        }
    }
    let grid_rows = treatments.len() + controls.len();

    let mut c = Canvas::new(900.0, 560.0);
    let outcome = rows.first().map(|r| r.outcome.as_str()).unwrap_or("");
    c.text(
        20.0,
        26.0,
        &format!("specification curve for {outcome}"),
        15.0,
        "start",
        DARK,
    );
    let top = Panel {
        x: 90.0,
        y: 60.0,
        w: 700.0,
        h: 280.0,
    };
    top.frame(&mut c, "treatment estimate by specification (sorted)");
    let n = rows.len().max(2) as f64;
    let xs = Scale::new(0.0, n - 1.0, top.x + 12.0, top.x + top.w - 12.0);
    let (lo, hi) = pad_with_zero(finite_range(rows.iter().flat_map(|r| {
        [r.estimate - 1.96 * r.se, r.estimate + 1.96 * r.se].into_iter()
    })));
    let ys = Scale::new(lo, hi, top.y + top.h - 8.0, top.y + 8.0);
    top.y_axis(&mut c, &ys, lo, hi);
    c.dashed(top.x, ys.at(0.0), top.x + top.w, ys.at(0.0), GRAY);
    for (pos, &i) in order.iter().enumerate() {
        let r = &rows[i];
        let x = xs.at(pos as f64);
        let col = if r.significant { color(0) } else { GRAY };
        c.line(x, ys.at(r.estimate - 1.96 * r.se), x, ys.at(r.estimate + 1.96 * r.se), col, 0.8);
        c.circle(x, ys.at(r.estimate), 2.6, col, 1.0);
    }
    if let Some(t) = test {
        let y = ys.at(t.observed_median);
        c.dashed(top.x, y, top.x + top.w, y, "#d62728");
        c.text(
            top.x + top.w - 4.0,
            y - 6.0,
            &format!(
                "median {:.3} ({} p = {:.4})",
                t.observed_median, t.method, t.p_value
            ),
            11.0,
            "end",
            "#d62728",
        );
    }

    let bottom = Panel {
        x: 90.0,
        y: 380.0,
        w: 700.0,
        h: 26.0 + 18.0 * grid_rows as f64,
    };
    bottom.frame(&mut c, "variables used");
    for (gi, name) in treatments.iter().chain(controls.iter()).enumerate() {
        let y = bottom.y + 14.0 + 18.0 * gi as f64;
        let is_treatment = gi < treatments.len();
        c.text(bottom.x - 8.0, y + 4.0, name, 10.0, "end", DARK);
        for (pos, &i) in order.iter().enumerate() {
            let r = &rows[i];
            let used = if is_treatment {
                r.treatment == *name
            } else {
                r.controls.split('+').any(|c| c == *name)
            };
            if used {
                let x = xs.at(pos as f64);
                let col = if is_treatment { color(0) } else { "#4c72b0" };
                c.rect(x - 2.0, y - 4.0, 4.0, 9.0, col, 0.9);
            }
        }
    }
    c.finish()
}
