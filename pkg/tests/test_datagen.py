import time

import numpy as np
import pytest

from svpcnet.datagen import (
    Dataset,
    DatasetFormatError,
    DatasetSpec,
    GenerationError,
    SplitDataset,
    ValidationPolicy,
    generate,
    load,
    persist,
    read_tuples,
    write_tuples,
)
from svpcnet.energies import EnergyModel, ksd_phi_pc
from svpcnet.lp.lattice import LatticeSpec, Segment


def _spec(kind="ksd", count=5, params=((),), augment=False, validation=None, lattice=None, source=None):
    model = EnergyModel(kind)
    return DatasetSpec(
        model=model,
        lattice=lattice or LatticeSpec.uniform(2, -1, 1, count),
        parameters=params,
        augment=augment,
        validation=validation or ValidationPolicy("random_fraction", 0.3, 0),
        source=source or ("analytic" if model.has_envelope else "svpc_lp"),
    )


def _all(data: SplitDataset) -> Dataset:
    from svpcnet.datagen import _concat

    return _concat([data.train, data.validation])


def test_ksd_grid_tuples():
    data = generate(_spec())
    full = _all(data)
    assert len(full) == 25
    np.testing.assert_array_equal(full.target, ksd_phi_pc(full.nu))
    assert set(full.source.tolist()) == {"analytic"}
    assert np.all(full.target <= full.phi + 1e-9)


def test_gksd_product_count():
    params = tuple((a, b) for a in (1, 1.5, 2) for b in (1, 1.5, 2))
    data = generate(_spec("gksd", count=3, params=params))
    assert len(data.train) + len(data.validation) == 81


def test_augmentation_adds_orbits():
    lat = LatticeSpec(((Segment(0.5, 0.6, 2),), (Segment(-0.2, -0.1, 2),)))
    data = generate(_spec(lattice=lat, augment=True))
    full = _all(data)
    assert len(full) == 16
    hit = np.flatnonzero((full.nu[:, 0] == 0.5) & (full.nu[:, 1] == -0.2))
    oid = full.orbit_id[hit[0]]
    members = full.subset(full.orbit_id == oid)
    assert len(members) == 4
    assert len(set(members.target.tolist())) == 1
    got = {tuple(r) for r in members.nu.tolist()}
    assert got == {(0.5, -0.2), (-0.5, 0.2), (-0.2, 0.5), (0.2, -0.5)}


def test_augmentation_deduplicates_symmetric_lattices():
    plain = generate(_spec(count=5))
    aug = generate(_spec(count=5, augment=True))
    assert len(_all(aug)) == len(_all(plain)) == 25


def test_orbit_ids_link_isotropic_tuples():
    full = _all(generate(_spec(count=7)))
    for oid in np.unique(full.orbit_id):
        grp = full.subset(full.orbit_id == oid)
        assert np.ptp(grp.target) <= 1e-9 and np.ptp(grp.phi) <= 1e-9


def test_split_is_disjoint_and_exhaustive():
    data = generate(_spec(count=9))
    keys = lambda ds: {tuple(r) for r in ds.mhat.tolist()}
    tr, va = keys(data.train), keys(data.validation)
    assert not tr & va
    assert len(tr | va) == 81
    assert len(data.validation) == round(0.3 * 81)


def test_split_is_reproducible():
    a, b = generate(_spec(count=9)), generate(_spec(count=9))
    assert a.train.equals(b.train) and a.validation.equals(b.validation)
    c = generate(_spec(count=9, validation=ValidationPolicy("random_fraction", 0.3, 1)))
    assert not c.train.equals(a.train)


def test_held_out_parameter_policy():
    params = ((1.0, 1.0), (2.0, 2.0))
    pol = ValidationPolicy("held_out", seed=3, values=((1.5, 1.5),), samples_per_value=10)
    data = generate(_spec("gksd", count=5, params=params, validation=pol))
    assert len(data.train) == 50 and len(data.validation) == 10
    np.testing.assert_array_equal(data.validation.zeta, np.full((10, 2), 1.5))
    with pytest.raises(GenerationError):
        generate(_spec("gksd", count=5, params=params,
                       validation=ValidationPolicy("held_out", values=((1.0, 1.0),))))


def test_policy_validation():
    with pytest.raises(ValueError):
        ValidationPolicy("random_fraction", 1.0)
    with pytest.raises(ValueError):
        ValidationPolicy("held_out")
    with pytest.raises(ValueError):
        ValidationPolicy("k_fold")


def test_missing_envelope_source_is_a_spec_error():
    with pytest.raises(GenerationError):
        _spec("stvk_damage", params=((0.1,),), source="analytic")


def test_damage_dataset_uses_lp_targets():
    data = generate(_spec("stvk_damage", count=5, params=((0.0,), (0.5,))))
    full = _all(data)
    assert set(full.source.tolist()) == {"svpc_lp"}
    assert np.all(full.target <= full.phi + 1e-9)
    assert np.all(full.target >= -1e-9)  # the normalised density has minimum 0


def test_envelope_violation_aborts_with_point():
    def bad_source(nu, zeta):
        out = ksd_phi_pc(nu)
        out[3] += 10.0
        return out

    with pytest.raises(GenerationError, match=r"nu=\[-1\.0, 0\.5\]"):
        generate(_spec(), bad_source)


def test_round_trip(tmp_path):
    params = tuple((a, b) for a in (1, 2) for b in (1.5, 2.5))
    data = generate(_spec("gksd", count=7, params=params, augment=True))
    back = load(persist(data, tmp_path / "ds"))
    assert back.train.equals(data.train) and back.validation.equals(data.validation)
    assert back.spec == data.spec
    header = (tmp_path / "ds" / "train.csv").read_text().splitlines()[0]
    assert header == "m_1,m_2,m_3,zeta_1,zeta_2,target,phi,orbit_id,source"


def test_round_trip_without_parameters(tmp_path):
    data = generate(_spec(count=6))
    write_tuples(data.train, tmp_path / "t.csv")
    assert read_tuples(tmp_path / "t.csv").equals(data.train)


def _write(tmp_path, text):
    path = tmp_path / "bad.csv"
    path.write_text(text)
    return path


def test_header_mismatch_names_location(tmp_path):
    path = _write(tmp_path, "m_1,m_2,m_3,target,phi,orbit,source\n")
    with pytest.raises(DatasetFormatError) as err:
        read_tuples(path)
    assert (err.value.line, err.value.column) == (1, 6)


def test_bad_number_names_location(tmp_path):
    head = "m_1,m_2,m_3,target,phi,orbit_id,source\n"
    path = _write(tmp_path, head + "0,0,0,0,0,1,analytic\n0,0,x,0,0,1,analytic\n")
    with pytest.raises(DatasetFormatError, match=r"bad.csv:3:3"):
        read_tuples(path)
    path = _write(tmp_path, head + "0,0,0,0,0,1\n")
    with pytest.raises(DatasetFormatError, match=r":2:"):
        read_tuples(path)
    path = _write(tmp_path, head + "0,0,0,0,0,1,oracle\n")
    with pytest.raises(DatasetFormatError, match=r":2:7"):
        read_tuples(path)


@pytest.mark.slow
def test_million_row_dataset_loads_quickly(tmp_path):
    grid = np.linspace(1, 2, 10)
    spec = DatasetSpec(EnergyModel("gksd"), LatticeSpec.uniform(2, -1.05, 1.05, 100, "quadratic"),
                       tuple((a, b) for a in grid for b in grid))
    data = generate(spec)
    persist(data, tmp_path)
    start = time.perf_counter()
    back = load(tmp_path)
    elapsed = time.perf_counter() - start
    assert len(back.train) + len(back.validation) == 10**6
    assert back.train.equals(data.train) and back.validation.equals(data.validation)
    assert elapsed <= 30.0, f"load took {elapsed:.1f}s"
