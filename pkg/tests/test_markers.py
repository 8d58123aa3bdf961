"""Ingestion, scaling, kinship, principal components and partitions."""

import numpy as np
import pytest

from pevsel import (ContractError, DataError, DegenerateInputError,
                    FormatError, MarkerMatrix, PhenotypeVector, center_scale,
                    kinship, load_markers, load_phenotypes, partition,
                    principal_components)
from conftest import make_marker_matrix, make_scaled


def write(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text)
    return path


class TestLoadMarkers:
    def test_csv_readback(self, tmp_path):
        path = write(tmp_path, "m.csv", "id,m1,m2\nL1,0,1\nL2,2,1\nL3,1,1\n")
        M = load_markers(path)
        assert M.n == 3 and M.m == 2
        assert M.ids == ("L1", "L2", "L3")
        assert M.marker_names == ("m1", "m2")
        np.testing.assert_array_equal(M.values, [[0, 1], [2, 1], [1, 1]])
        assert not M.centered_scaled

    def test_missing_cell_imputed_to_column_mean(self, tmp_path):
        path = write(tmp_path, "m.csv", "id,m1,m2\nL1,NA,1\nL2,2,1\nL3,1,1\n")
        M = load_markers(path)
        assert M.values[0, 0] == pytest.approx((2 + 1) / 2)

    def test_duplicate_id_is_data_error(self, tmp_path):
        path = write(tmp_path, "m.csv", "id,m1\nL1,0\nL1,2\n")
        with pytest.raises(DataError, match="L1"):
            load_markers(path)

    def test_non_numeric_cell_is_data_error(self, tmp_path):
        path = write(tmp_path, "m.csv", "id,m1,m2\nL1,0,1\nL2,x,1\n")
        with pytest.raises(DataError, match=r"line 3, column 2"):
            load_markers(path)

    def test_field_count_mismatch_names_line(self, tmp_path):
        path = write(tmp_path, "m.csv", "id,m1,m2\nL1,0\n")
        with pytest.raises(FormatError, match="line 2"):
            load_markers(path)

    def test_bad_header(self, tmp_path):
        path = write(tmp_path, "m.csv", "name,m1\nL1,0\n")
        with pytest.raises(FormatError, match="line 1, column 1"):
            load_markers(path)

    def test_all_missing_column(self, tmp_path):
        path = write(tmp_path, "m.csv", "id,m1,m2\nL1,NA,1\nL2,NA,2\n")
        with pytest.raises(DataError, match="m1"):
            load_markers(path)

    def test_headerless_whitespace_mode(self, tmp_path):
        path = write(tmp_path, "m.txt", "L1 0 1\nL2 2 1\nL3 1 1\n")
        M = load_markers(path, headerless=True)
        assert M.ids == ("L1", "L2", "L3")
        assert M.m == 2
        np.testing.assert_array_equal(M.values[:, 0], [0, 2, 1])


class TestLoadPhenotypes:
    def test_traits_and_missing(self, tmp_path):
        path = write(tmp_path, "p.csv",
                     "id,yield,height\nL1,1.5,NA\nL2,2.0,10\nL3,2.5,12\n")
        table = load_phenotypes(path)
        assert table.trait_names == ("yield", "height")
        y = table.trait("yield")
        assert y.ids == ("L1", "L2", "L3")
        h = table.trait("height")
        assert h.ids == ("L2", "L3")
        with pytest.raises(DataError):
            table.trait("nope")

    def test_year_column_is_metadata(self, tmp_path):
        path = write(tmp_path, "p.csv",
                     "id,yield,year\nL1,1.5,2001\nL2,2.0,2002\n")
        table = load_phenotypes(path)
        assert table.trait_names == ("yield",)
        assert table.years == {"L1": 2001, "L2": 2002}


class TestCenterScale:
    def test_column_1_2_3(self):
        M = MarkerMatrix(("a", "b", "c"), [[1.0], [2.0], [3.0]], ("m1",))
        S = center_scale(M)
        # population sd of (1,2,3) is sqrt(2/3)
        sd = np.sqrt(2.0 / 3.0)
        np.testing.assert_allclose(S.values[:, 0], np.array([-1, 0, 1]) / sd,
                                   atol=1e-12)
        assert S.centered_scaled

    def test_constant_column_dropped(self):
        M = MarkerMatrix(("a", "b", "c"), [[1, 2], [2, 2], [3, 2]],
                         ("m1", "m2"))
        S = center_scale(M)
        assert S.m == M.m - 1
        assert S.marker_names == ("m1",)

    def test_unit_mean_and_sd_postcondition(self, rng):
        S = make_scaled(rng, 15, 40)
        np.testing.assert_allclose(S.values.mean(axis=0), 0.0, atol=1e-10)
        np.testing.assert_allclose(S.values.std(axis=0), 1.0, atol=1e-10)

    def test_idempotence_on_retained_columns(self, rng):
        S = make_scaled(rng, 12, 20)
        # re-scaling already-scaled values (flag reset) changes nothing
        again = center_scale(MarkerMatrix(S.ids, S.values, S.marker_names))
        np.testing.assert_allclose(again.values, S.values, atol=1e-10)

    def test_double_call_is_contract_error(self, rng):
        S = make_scaled(rng, 5, 5)
        with pytest.raises(ContractError):
            center_scale(S)

    def test_all_constant_is_degenerate(self):
        M = MarkerMatrix(("a", "b"), [[2, 2], [2, 2]], ("m1", "m2"))
        with pytest.raises(DegenerateInputError):
            center_scale(M)


class TestKinship:
    def test_identity_markers(self):
        M = MarkerMatrix(("a", "b"), np.eye(2), ("m1", "m2"),
                         centered_scaled=True)
        K = kinship(M)
        np.testing.assert_allclose(K.values, np.eye(2) / 2.0, atol=1e-14)

    def test_psd_by_construction(self, rng):
        K = kinship(make_scaled(rng, 12, 30))
        w = np.linalg.eigvalsh(K.values)
        assert w[0] >= -1e-8 * w[-1]
        np.testing.assert_allclose(K.values, K.values.T, atol=1e-12)

    def test_matches_brute_force_double_loop(self, rng):
        M = make_scaled(rng, 10, 50)
        K = kinship(M).values
        V = M.values
        brute = np.zeros((10, 10))
        for i in range(10):
            for k in range(10):
                brute[i, k] = sum(V[i, j] * V[k, j] for j in range(M.m)) / M.m
        np.testing.assert_allclose(K, brute, atol=1e-10)

    def test_row_permutation_commutes(self, rng):
        M = make_scaled(rng, 8, 25)
        perm = rng.permutation(8)
        MP = MarkerMatrix(tuple(M.ids[i] for i in perm), M.values[perm],
                          M.marker_names, centered_scaled=True)
        K = kinship(M).values
        KP = kinship(MP).values
        np.testing.assert_allclose(KP, K[np.ix_(perm, perm)], atol=1e-12)

    def test_uncentered_is_contract_error(self, rng):
        M = make_marker_matrix(rng, 5, 5)
        with pytest.raises(ContractError):
            kinship(M)


class TestPrincipalComponents:
    def test_full_rank_reconstruction(self, rng):
        M = make_scaled(rng, 10, 30)
        s = np.linalg.svd(M.values, compute_uv=False)
        rank = int(np.sum(s > s[0] * 30 * np.finfo(float).eps))
        basis = principal_components(M, k=rank)
        G = M.values @ M.values.T
        R = basis.scores @ basis.scores.T
        assert np.linalg.norm(R - G) / np.linalg.norm(G) < 1e-8

    def test_identical_rows_get_identical_scores(self, rng):
        values = rng.standard_normal((6, 12))
        values[3] = values[1]
        values -= values.mean(axis=0)
        values /= values.std(axis=0)
        M = MarkerMatrix(tuple("abcdef"), values, tuple(f"c{i}" for i in range(12)),
                         centered_scaled=True)
        basis = principal_components(M, k=4)
        np.testing.assert_allclose(basis.scores[1], basis.scores[3], atol=1e-8)

    def test_explained_variance_matches_eigensolve(self, rng):
        M = make_scaled(rng, 20, 100)
        basis = principal_components(M, k=5)
        w = np.linalg.eigvalsh(M.values @ M.values.T)[::-1]
        np.testing.assert_allclose(basis.explained_variance, w[:5],
                                   rtol=1e-8)
        assert np.all(np.diff(basis.explained_variance) <= 1e-9)

    def test_svd_and_gram_routes_agree(self, rng):
        M = make_scaled(rng, 12, 40)
        a = principal_components(M, k=6, method="svd")
        b = principal_components(M, k=6, method="gram")
        np.testing.assert_allclose(a.scores, b.scores, atol=1e-8)
        np.testing.assert_allclose(a.explained_variance, b.explained_variance,
                                   rtol=1e-8)

    def test_k_out_of_range(self, rng):
        M = make_scaled(rng, 6, 10)
        with pytest.raises(ContractError):
            principal_components(M, k=0)
        with pytest.raises(ContractError):
            principal_components(M, k=7)

    def test_auto_k_rule(self, rng):
        M = make_scaled(rng, 25, 60)
        basis = principal_components(M)
        ev = np.linalg.svd(M.values, compute_uv=False) ** 2
        total = ev.sum()
        k = basis.k
        assert ev[:k].sum() >= 0.9 * total or k == min(25, 200)
        if k > 1:
            assert ev[:k - 1].sum() < 0.9 * total


class TestPartition:
    def test_valid_partition_with_unused_id(self, rng):
        M = make_scaled(rng, 5, 8, prefix="L")
        ids = M.ids
        part = partition(M, [ids[0]], list(ids[1:4]))
        assert part.test_ids == (ids[0],)
        assert part.candidate_ids == tuple(ids[1:4])

    def test_overlap_is_contract_error(self, rng):
        M = make_scaled(rng, 4, 8, prefix="L")
        with pytest.raises(ContractError):
            partition(M, [M.ids[0]], [M.ids[0], M.ids[1]])

    def test_empty_candidates_is_contract_error(self, rng):
        M = make_scaled(rng, 4, 8, prefix="L")
        with pytest.raises(ContractError):
            partition(M, [M.ids[0]], [])

    def test_unknown_id_is_data_error(self, rng):
        M = make_scaled(rng, 4, 8, prefix="L")
        with pytest.raises(DataError):
            partition(M, ["nope"], [M.ids[1]])

    def test_rows_addressable_by_partition(self, rng):
        M = make_scaled(rng, 6, 8, prefix="L")
        basis = principal_components(M, k=3)
        part = partition(M, M.ids[:2], M.ids[2:])
        np.testing.assert_array_equal(M.rows(part.test_ids), M.values[:2])
        np.testing.assert_array_equal(basis.rows(part.candidate_ids),
                                      basis.scores[2:])


class TestTypes:
    def test_phenotype_vector_checks(self):
        with pytest.raises(DataError):
            PhenotypeVector(("a", "a"), [1.0, 2.0])
        with pytest.raises(DataError):
            PhenotypeVector(("a", "b"), [1.0, np.nan])

    def test_marker_matrix_is_immutable(self, rng):
        M = make_marker_matrix(rng, 3, 3)
        with pytest.raises(ValueError):
            M.values[0, 0] = 9.0
