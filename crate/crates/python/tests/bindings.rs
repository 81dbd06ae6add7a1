use std::ffi::CStr;

use pyo3::prelude::*;
use pyo3::types::PyDict;

fn run(code: &CStr) {
    Python::attach(|py| {
        let m = pyo3::wrap_pymodule!(audkit_py::audkit_module)(py);
        let globals = PyDict::new(py);
        globals.set_item("audkit", m).unwrap();
        if let Err(e) = py.run(code, Some(&globals), None) {
            e.display(py);
            panic!("python code failed: {e}");
        }
    });
}

#[test]
fn metrics() {
    run(c"
assert abs(audkit.nmi([[3, 1], [0, 4]]) - 56.15896365639193) < 1e-9
assert abs(audkit.nmi([[3, 1], [0, 4]], 'joint') - 39.04237975749783) < 1e-9
p, r, f = audkit.boundary_prf([10, 21, 40], [10, 20, 30], 100)
assert all(abs(x - 200 / 3) < 1e-9 for x in (p, r, f))
assert audkit.boundaries_from_labels(['a', 'a', 'b', 'b', 'a']) == [2, 4]
try:
    audkit.nmi([[1]], 'bogus')
except ValueError:
    pass
else:
    raise AssertionError('expected ValueError')
");
}

#[test]
fn embeddings_and_kmeans() {
    run(c"
seg = [[1.0, 10.0], [2.0, 20.0], [3.0, 30.0], [4.0, 40.0]]
assert audkit.embed_segment(seg) == [2.5, 25.0]
assert audkit.embed_segment(seg, 'ds', 2) == [1.5, 15.0, 3.5, 35.0]
m = audkit.kmeans_fit([[0.0], [1.0], [10.0], [11.0]], k=2, seed=3)
assert m.k == 2 and m.inertia == 1.0
assert sorted(c[0] for c in m.centroids) == [0.5, 10.5]
assert m.assignments[0] == m.assignments[1] != m.assignments[2] == m.assignments[3]
try:
    audkit.kmeans_fit([[0.0]], k=2)
except audkit.AudkitError:
    pass
else:
    raise AssertionError('expected AudkitError')
");
}

#[test]
fn archives_and_alignments() {
    run(c"
import os, tempfile
arc, gold = audkit.generate_corpus(n_phones=5, dim=3, n_utts=4, seed=2)
assert len(arc) == 4 and arc.dim == 3 and list(gold) == arc.utt_ids()
assert audkit.FeatureArchive.from_bytes(arc.to_bytes()) == arc
noisy = audkit.corrupt(gold, jitter_frames=1, seed=5)
assert list(noisy) == list(gold)
with tempfile.TemporaryDirectory() as d:
    arc.save(os.path.join(d, 'f.audf'))
    assert audkit.FeatureArchive.load(os.path.join(d, 'f.audf')) == arc
    audkit.write_alignment(os.path.join(d, 'g.ali'), gold)
    assert audkit.read_alignment(os.path.join(d, 'g.ali')) == gold
    try:
        audkit.FeatureArchive.load(os.path.join(d, 'missing.audf'))
    except OSError:
        pass
    else:
        raise AssertionError('expected OSError')
a = audkit.FeatureArchive(12.5)
a.add('x', [[1.0, 2.0], [3.0, 4.0]])
assert a.frames('x') == [[1.0, 2.0], [3.0, 4.0]] and a.frame_shift_ms == 12.5
");
}

#[test]
fn experiments() {
    run(c"
cfg = '[synth]\\nn_phones = 6\\ndim = 4\\nn_utts = 10\\n[cluster]\\nk = 6\\n[run]\\nmode = \"upperbound\"\\nmerge_adjacent = false\\n'
r = audkit.run_experiment(cfg)
assert len(r['per_rep']) == 5
assert r['mean']['fscore_pct'] == 100.0
assert r['config']['mode'] == 'upperbound'
s = audkit.run_sweep([4, 6], cfg)
assert s['k_values'] == [4, 6] and len(s['reports']) == 2
assert s['reports'][1]['per_rep'] == r['per_rep']
try:
    audkit.run_experiment('[run]\\nmode = \"nope\"\\n')
except ValueError:
    pass
else:
    raise AssertionError('expected ValueError')
");
}
