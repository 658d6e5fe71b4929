use screenguide::par::Exec;
use screenguide::scene::builtin;
use screenguide::session::{reference, Mode, Session, SessionConfig};

/// Guided and plain estimates agree within three standard errors on almost
/// every pixel.
fn agrees_with_plain(scene_name: &str) {
    let scene = builtin(scene_name).unwrap();
    let cfg = SessionConfig::new(16, 16, Mode::Pg, 21);
    let mut pg = Session::new(&scene, cfg);
    for _ in 0..32 {
        pg.step();
    }
    let spp = 1024;
    let guided = pg.render_frozen(32, 1, spp);
    let plain = reference(&scene, &SessionConfig { seed: 2, ..cfg }, 32, spp);
    let within = (0..guided.image.len())
        .filter(|&i| {
            let d = (guided.image[i].luminance() - plain.image[i].luminance()).abs();
            d <= 3.0 * ((guided.lum_var[i] + plain.lum_var[i]) / spp as f64).sqrt() + 1e-12
        })
        .count();
    assert!(within as f64 >= 0.97 * guided.image.len() as f64, "{scene_name}: {within} of {}", guided.image.len());
    assert_eq!(guided.stats.nonfinite, 0);
}

#[test]
fn guided_glossy_box_is_unbiased() {
    agrees_with_plain("glossy-box");
}

#[test]
fn guided_corridor_is_unbiased() {
    agrees_with_plain("indirect-corridor");
}

#[test]
fn serial_and_parallel_sessions_match() {
    let scene = builtin("cornell-occluder").unwrap();
    let run = |exec| {
        let mut cfg = SessionConfig::new(20, 12, Mode::Pg, 3);
        cfg.exec = exec;
        let mut s = Session::new(&scene, cfg);
        let images: Vec<_> = (0..4).map(|_| s.step().image()).collect();
        (images, s.gamma().entries().to_vec())
    };
    assert_eq!(run(Exec::Serial), run(Exec::Parallel));
}
