"""Dependency detection, image spec rendering, and build caching."""

from __future__ import annotations

import hashlib
import itertools
import random
import threading

import pytest

from q8s.celldeps import (
    CellTask,
    DependencySet,
    ImageCache,
    RecordingBuilder,
    ShellBuilder,
    BuildError,
    RegistryError,
    detect_dependencies,
    ensure_image,
    render_image_spec,
)


class TestDetectDependencies:
    def test_table_one_pins(self):
        src = "from qiskit import transpile\nimport timeit\n"
        deps = detect_dependencies(src, {"qiskit": "qiskit==1.0.0"}, {"timeit"})
        assert deps.entries == (("qiskit", "qiskit==1.0.0"),)

    def test_no_imports(self):
        assert detect_dependencies("x = 1\n").entries == ()

    def test_sorted_output(self):
        src = "import qiskit_aer\nimport qiskit\n"
        deps = detect_dependencies(src)
        assert [m for m, _ in deps.entries] == ["qiskit", "qiskit_aer"]

    def test_sort_oracle_over_permutations(self):
        lines = ["import zlib_like", "import alpha", "import mmm"]
        results = {
            detect_dependencies("\n".join(perm), {}, frozenset()).entries
            for perm in itertools.permutations(lines)
        }
        assert len(results) == 1

    def test_multi_import_clause(self):
        deps = detect_dependencies("import numpy as np, scipy.linalg\n", {}, frozenset())
        assert [m for m, _ in deps.entries] == ["numpy", "scipy"]

    def test_from_import_uses_root(self):
        deps = detect_dependencies("from qiskit.circuit.library import QFT\n")
        assert deps.entries == (("qiskit", "qiskit==1.0.0"),)

    def test_stdlib_dropped_by_default(self):
        assert detect_dependencies("import json\nimport os\n").entries == ()

    def test_unknown_module_maps_to_bare_name(self):
        deps = detect_dependencies("import somethingodd\n", {}, frozenset())
        assert deps.entries == (("somethingodd", "somethingodd"),)

    def test_indented_imports_count(self):
        src = "def f():\n    import qiskit\n"
        assert detect_dependencies(src).entries == (("qiskit", "qiskit==1.0.0"),)

    def test_unparseable_line_warns_and_continues(self, caplog):
        src = "import \nimport qiskit\n"
        with caplog.at_level("WARNING", logger="q8s.celldeps"):
            deps = detect_dependencies(src)
        assert deps.entries == (("qiskit", "qiskit==1.0.0"),)
        assert any("unparseable" in r.message for r in caplog.records)

    def test_pure_function(self):
        src = "import qiskit\nfrom numpy import array\n"
        assert detect_dependencies(src) == detect_dependencies(src)


class TestRenderImageSpec:
    def test_empty_deps(self):
        spec = render_image_spec(DependencySet(()), "reg.example.com/q8s/base:cuda12")
        assert spec.build_file_text == "FROM reg.example.com/q8s/base:cuda12\n"
        assert spec.requirements_text == ""
        expected = hashlib.sha256(
            b"reg.example.com/q8s/base:cuda12\x00"
        ).hexdigest()
        assert spec.content_hash == expected

    def test_requirements_text(self):
        deps = DependencySet.from_pairs(
            {"qiskit": "qiskit==1.0.0", "qiskit_aer": "qiskit-aer==0.13.3"}
        )
        spec = render_image_spec(deps, "base:1")
        assert spec.requirements_text == "qiskit==1.0.0\nqiskit-aer==0.13.3\n"
        assert spec.build_file_text == (
            "FROM base:1\n"
            "COPY requirements.txt /tmp/requirements.txt\n"
            "RUN pip install -r /tmp/requirements.txt\n"
        )

    def test_hash_independent_of_construction_order(self):
        a = DependencySet.from_pairs({"b": "b==1", "a": "a==2"})
        b = DependencySet.from_pairs({"a": "a==2", "b": "b==1"})
        assert render_image_spec(a, "x").content_hash == render_image_spec(b, "x").content_hash

    def test_requirements_roundtrip(self):
        deps = DependencySet.from_pairs({"a": "a==1", "b": "b==2.0"})
        text = render_image_spec(deps, "x").requirements_text
        parsed = DependencySet.from_pairs(
            {req.split("==")[0]: req for req in text.splitlines()}
        )
        assert parsed == deps

    def test_rejects_empty_base(self):
        with pytest.raises(ValueError):
            render_image_spec(DependencySet(()), "")


class TestEnsureImage:
    def test_cache_hit_skips_builder(self):
        cache, builder = ImageCache(), RecordingBuilder()
        spec = render_image_spec(DependencySet.from_pairs({"a": "a==1"}), "base")
        tag1 = ensure_image(spec, cache, builder)
        tag2 = ensure_image(spec, cache, builder)
        assert tag1 == tag2
        assert len(builder.invocations) == 1

    def test_changed_requirements_rebuild(self):
        cache, builder = ImageCache(), RecordingBuilder()
        spec1 = render_image_spec(DependencySet.from_pairs({"a": "a==1"}), "base")
        spec2 = render_image_spec(DependencySet.from_pairs({"a": "a==2"}), "base")
        tag1 = ensure_image(spec1, cache, builder)
        tag2 = ensure_image(spec2, cache, builder)
        assert tag1 != tag2
        assert tag1.rsplit(":", 1)[1] != tag2.rsplit(":", 1)[1]
        assert len(builder.invocations) == 2

    def test_empty_deps_tag_from_base_hash(self):
        cache, builder = ImageCache(), RecordingBuilder()
        spec = render_image_spec(DependencySet(()), "base:tag")
        tag = ensure_image(spec, cache, builder, registry_prefix="reg/pre")
        assert tag == f"reg/pre/job-dependencies:{spec.content_hash[:12]}"

    def test_cache_soundness_over_random_sequence(self):
        cache, builder = ImageCache(), RecordingBuilder()
        rng = random.Random(7)
        specs = [
            render_image_spec(DependencySet.from_pairs({"m": f"m=={v}"}), "base")
            for v in range(5)
        ]
        seen = set()
        for _ in range(60):
            spec = rng.choice(specs)
            seen.add(spec.content_hash)
            ensure_image(spec, cache, builder)
        assert len(builder.invocations) == len(seen)

    def test_single_flight_under_concurrency(self):
        cache = ImageCache()
        builder = RecordingBuilder(delay_s=0.05)
        spec = render_image_spec(DependencySet.from_pairs({"z": "z==9"}), "base")
        threads = [
            threading.Thread(target=ensure_image, args=(spec, cache, builder))
            for _ in range(8)
        ]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert len(builder.invocations) == 1

    def test_build_failure_propagates(self):
        cache = ImageCache()
        builder = RecordingBuilder(fail_with=BuildError("compiler exploded"))
        spec = render_image_spec(DependencySet(()), "base")
        with pytest.raises(BuildError, match="compiler exploded"):
            ensure_image(spec, cache, builder)
        # A failed build must not poison the cache.
        assert cache.get(spec.content_hash) is None


class TestShellBuilder:
    def test_success_with_true_commands(self):
        spec = render_image_spec(DependencySet.from_pairs({"a": "a==1"}), "base")
        builder = ShellBuilder(build_command="true {context} {tag}", push_command="true {tag}")
        builder.build_and_push(spec, "reg/x:abc")

    def test_build_failure_carries_diagnostics(self):
        spec = render_image_spec(DependencySet(()), "base")
        builder = ShellBuilder(build_command="false {context}", push_command="true")
        with pytest.raises(BuildError, match="exited 1"):
            builder.build_and_push(spec, "reg/x:abc")

    def test_push_failure_is_registry_error(self):
        spec = render_image_spec(DependencySet(()), "base")
        builder = ShellBuilder(build_command="true {context}", push_command="false {tag}")
        with pytest.raises(RegistryError):
            builder.build_and_push(spec, "reg/x:abc")


class TestCellTask:
    def test_valid(self):
        task = CellTask("print('x')", "gpu", "my-cell-1")
        assert task.target == "gpu"

    def test_rejects_empty_source(self):
        with pytest.raises(ValueError):
            CellTask("", "cpu")

    @pytest.mark.parametrize("hint", ["UPPER", "has space", "", "x" * 41, "under_score"])
    def test_rejects_bad_hint(self, hint):
        with pytest.raises(ValueError):
            CellTask("x", "cpu", hint)

    def test_rejects_bad_target(self):
        with pytest.raises(ValueError):
            CellTask("x", "tpu")
