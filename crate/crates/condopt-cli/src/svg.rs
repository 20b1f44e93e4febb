//! Best-effort SVG schematic of a partition over 1-D or 2-D predictor
//! spaces. Each stopped block becomes a rectangle shaded by its posterior
//! stopping probability and labeled with rho and n.

use condopt::{Dim, DimState, HmapNode, HmapTree, Region, SampleSpace};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const MARGIN: f64 = 24.0;

/// Unit-interval extent of one region coordinate inside its root range.
fn unit_extent(space: &SampleSpace, region: &Region, dim: usize) -> (f64, f64) {
    match region.state()[dim] {
        DimState::Cont { .. } => {
            let (lo, hi) = region.bounds(space, dim);
            let Dim::Continuous { lo: rlo, hi: rhi } = space.dims()[dim] else {
                unreachable!()
            };
            ((lo - rlo) / (rhi - rlo), (hi - rlo) / (rhi - rlo))
        }
        DimState::Free => (0.0, 1.0),
        DimState::Fixed(false) => (0.0, 0.5),
        DimState::Fixed(true) => (0.5, 1.0),
    }
}

pub fn render(space: &SampleSpace, tree: &HmapTree) -> String {
    let plot_w = WIDTH - 2.0 * MARGIN;
    let plot_h = HEIGHT - 2.0 * MARGIN;
    let mut out = String::new();
    out.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
         viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n"
    ));
    out.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");

    for leaf in tree.leaves() {
        let HmapNode::Stop { region, rho_post, n, .. } = leaf else { continue };
        let (x0, x1) = unit_extent(space, region, 0);
        let (y0, y1) = if space.n_dims() > 1 {
            let (a, b) = unit_extent(space, region, 1);
            (1.0 - b, 1.0 - a) // SVG y grows downward
        } else {
            (0.0, 1.0)
        };
        let rx = MARGIN + x0 * plot_w;
        let ry = MARGIN + y0 * plot_h;
        let rw = (x1 - x0) * plot_w;
        let rh = (y1 - y0) * plot_h;
        let shade = (230.0 - 110.0 * rho_post) as u32;
        out.push_str(&format!(
            "<rect x=\"{rx:.2}\" y=\"{ry:.2}\" width=\"{rw:.2}\" height=\"{rh:.2}\" \
             fill=\"rgb({shade},236,{shade})\" stroke=\"black\" stroke-width=\"1\"/>\n"
        ));
        if rw > 46.0 && rh > 24.0 {
            out.push_str(&format!(
                "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"10\" text-anchor=\"middle\" \
                 font-family=\"sans-serif\">r={rho_post:.2} n={n}</text>\n",
                rx + rw / 2.0,
                ry + rh / 2.0
            ));
        }
    }
    out.push_str("</svg>\n");
    out
}
