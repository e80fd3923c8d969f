use hemiscan_cli::{artifacts, commands, config::RunConfig};
use hemiscan_core::explain::LesionClassifier;
use hemiscan_core::pipeline::Volume;
use hemiscan_core::tensor::Tensor;

fn blur(v: &Volume) -> Volume {
    let (s, h, w) = (v.slices, v.height, v.width);
    let mut out = v.voxels.clone();
    for k in 0..s {
        let base = k * h * w;
        for r in 0..h {
            for c in 0..w {
                let mut sum = 0.0f64;
                let mut n = 0.0f64;
                for dr in -1i64..=1 {
                    for dc in -1i64..=1 {
                        let rr = r as i64 + dr;
                        let cc = c as i64 + dc;
                        if rr >= 0 && rr < h as i64 && cc >= 0 && cc < w as i64 {
                            sum += v.voxels[base + rr as usize * w + cc as usize] as f64;
                            n += 1.0;
                        }
                    }
                }
                out[base + r * w + c] = (sum / n) as f32;
            }
        }
    }
    Volume::new(s, h, w, out, v.patient_id.clone(), v.scan_id.clone(), v.timepoint).unwrap()
}

#[test]
fn diag() {
    let cfg = RunConfig::load(Some(std::path::Path::new("/tmp/acc.json")), None, None).unwrap();
    let scans = artifacts::load_dataset(&cfg.out, &cfg.pipeline.config()).unwrap();
    let split = artifacts::load_split(&cfg.out, &scans).unwrap();
    let mut mtl = commands::load_mtl(&cfg).unwrap();
    let mut ae = commands::load_autoencoder(&cfg).unwrap();
    let mut shown = 0;
    for &i in &split.test {
        let s = &scans[i];
        if !s.label.presence {
            continue;
        }
        let v = &s.volume;
        let x = Tensor::from_vec(&[v.slices, 1, v.height, v.width], v.voxels.clone()).unwrap();
        let p_x = mtl.p_lesion(&x, v).unwrap();
        if p_x <= 0.5 {
            continue;
        }
        let b = blur(v);
        let xb = Tensor::from_vec(&[v.slices, 1, v.height, v.width], b.voxels.clone()).unwrap();
        let p_b = mtl.p_lesion(&xb, v).unwrap();
        let z = ae.encode(&x, false).unwrap();
        let recon = ae.decode(&z, false).unwrap();
        let p_r = mtl.p_lesion(&recon, v).unwrap();
        // reconstruction of the blurred input
        let zb = ae.encode(&xb, false).unwrap();
        let reconb = ae.decode(&zb, false).unwrap();
        let p_rb = mtl.p_lesion(&reconb, v).unwrap();
        // mean intensity shift
        let mx: f64 = v.voxels.iter().map(|&a| a as f64).sum::<f64>() / v.voxels.len() as f64;
        let mr: f64 = recon.data().iter().map(|&a| a as f64).sum::<f64>() / v.voxels.len() as f64;
        println!(
            "{}: p(x)={:.4} p(blur)={:.4} p(recon)={:.4} p(recon(blur))={:.4} meanx={:.4} meanrec={:.4}",
            s.scan_id, p_x, p_b, p_r, p_rb, mx, mr
        );
        shown += 1;
        if shown >= 15 {
            break;
        }
    }
}
