//! Plain-text output bundle: columnar files with 17 significant digits.

use crate::runner::{manifest_text, RunSummary};
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

fn fmt_g(x: f64) -> String {
    format!("{x:.16e}")
}

/// Writes the bundle into `dir`, creating it if needed. Every file except
/// the `# timing` lines of the manifest is reproducible byte for byte.
pub fn write_bundle(summary: &RunSummary, dir: &Path) -> std::io::Result<()> {
    fs::create_dir_all(dir)?;

    fs::write(dir.join("manifest.txt"), manifest_text(summary))?;

    {
        let mut w = BufWriter::new(fs::File::create(dir.join("checks.txt"))?);
        for (key, value) in &summary.checks {
            writeln!(w, "{key} = {value}")?;
        }
    }

    if let Some(spectrum) = &summary.spectrum {
        let mut w = BufWriter::new(fs::File::create(dir.join("eigenvalues.txt"))?);
        writeln!(w, "# index lambda residual smoothness (half convention)")?;
        writeln!(w, "# alias directions discarded: {}", spectrum.discarded)?;
        let scale = match summary.config.convention {
            dynlap::laplacian::Convention::WithHalf => 1.0,
            dynlap::laplacian::Convention::Raw => 2.0,
        };
        for (i, ((lambda, residual), smooth)) in spectrum
            .eigenvalues
            .iter()
            .zip(&spectrum.residuals)
            .zip(&spectrum.smoothness)
            .enumerate()
        {
            writeln!(
                w,
                "{} {} {} {}",
                i + 1,
                fmt_g(lambda * scale),
                fmt_g(*residual),
                fmt_g(*smooth)
            )?;
        }

        let mut w = BufWriter::new(fs::File::create(dir.join("phi2.txt"))?);
        writeln!(w, "# x1 x2 phi2")?;
        let phi2 = &spectrum.eigenvectors[1];
        for i in 0..summary.grid.n_cells() {
            let c = summary.grid.cell_center(i);
            writeln!(
                w,
                "{} {} {}",
                fmt_g(c[0]),
                fmt_g(c[1]),
                fmt_g(phi2.values()[i])
            )?;
        }
    }

    if !summary.sweep_curve.is_empty() {
        let mut w = BufWriter::new(fs::File::create(dir.join("sweep.txt"))?);
        writeln!(w, "# threshold ratio")?;
        for (t, ratio) in &summary.sweep_curve {
            if let Some(r) = ratio {
                writeln!(w, "{} {}", fmt_g(*t), fmt_g(*r))?;
            }
        }
    }

    if !summary.defect_table.is_empty() {
        let mut w = BufWriter::new(fs::File::create(dir.join("defects.txt"))?);
        writeln!(w, "# eps defect")?;
        for (eps, defect) in &summary.defect_table {
            writeln!(w, "{} {}", fmt_g(*eps), fmt_g(*defect))?;
        }
    }

    if let Some(best) = &summary.best {
        let mut w = BufWriter::new(fs::File::create(dir.join("contour_mu.txt"))?);
        writeln!(w, "# optimal level-set polylines, one vertex per line")?;
        for pl in best.contour.polylines() {
            for p in pl {
                writeln!(w, "{} {}", fmt_g(p[0]), fmt_g(p[1]))?;
            }
            writeln!(w)?;
        }
    }

    if !summary.image_polylines.is_empty() {
        let mut w = BufWriter::new(fs::File::create(dir.join("contour_nu.txt"))?);
        writeln!(w, "# image of the optimal level set, one vertex per line")?;
        for pl in &summary.image_polylines {
            for p in pl {
                writeln!(w, "{} {}", fmt_g(p[0]), fmt_g(p[1]))?;
            }
            writeln!(w)?;
        }
    }

    Ok(())
}
