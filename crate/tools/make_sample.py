#!/usr/bin/env python3
"""Generate a QM9-layout sample of small organic molecules.

Each molecule is written as one extended-XYZ file using the QM9 per-file
layout (count line, tab-separated property line, atom lines with Mulliken
charges, harmonic frequencies, SMILES, InChI).

Structures: random C/N/O/F heavy-atom graphs (at most 9 heavy atoms),
hydrogen-saturated and embedded with RDKit ETKDG, relaxed with MMFF94.
Electronic energies: RHF/STO-3G single points (pyscf).
Thermochemistry at 298.15 K: rigid-rotor / harmonic-oscillator using
MMFF94 finite-difference Hessian frequencies.

Columns written on line 2 (zero-based after splitting on whitespace):
  0 'gdb'  1 index  2-4 rotational constants A,B,C (GHz)  5 dipole (Debye)
  6 polarizability (not computed, written as 0)  7 HOMO  8 LUMO  9 gap (Ha)
  10 <r^2> (Bohr^2)  11 ZPVE  12 U0  13 U  14 H  15 G (Ha)  16 Cv (cal/mol K)

Usage: make_sample.py OUT_DIR [COUNT] [SEED]
"""

import os
import random
import sys

import numpy as np
from pyscf import gto, scf
from rdkit import Chem, RDLogger
from rdkit.Chem import AllChem
from rdkit.Chem.rdForceFieldHelpers import MMFFGetMoleculeForceField, MMFFGetMoleculeProperties

RDLogger.DisableLog("rdApp.*")

VALENCE = {"C": 4, "N": 3, "O": 2, "F": 1}
ELEMENTS = ["C", "N", "O", "F"]
ELEMENT_WEIGHTS = [0.68, 0.13, 0.17, 0.02]
HEAVY_COUNTS = [9, 8, 7, 6, 5, 4, 3, 2, 1]
HEAVY_WEIGHTS = [0.72, 0.16, 0.06, 0.025, 0.015, 0.008, 0.006, 0.004, 0.002]

T = 298.15
KB_HA = 3.166811563e-6  # Hartree / K
R_CAL = 1.987204259  # cal / mol K
HA_PER_KCAL = 1.0 / 627.509474
AMU = 1.66053906660e-27
KB = 1.380649e-23
H_PLANCK = 6.62607015e-34
C_CM = 2.99792458e10
ANG = 1e-10
P0 = 101325.0


def random_molecule(rng):
    n = rng.choices(HEAVY_COUNTS, HEAVY_WEIGHTS)[0]
    while True:
        elems = [rng.choices(ELEMENTS, ELEMENT_WEIGHTS)[0] for _ in range(n)]
        if n == 1 or elems.count("F") <= n - 2 or n == 2:
            break
    rw = Chem.RWMol()
    for e in elems:
        rw.AddAtom(Chem.Atom(e))
    free = [VALENCE[e] for e in elems]
    order = list(range(n))
    rng.shuffle(order)
    placed = [order[0]]
    for i in order[1:]:
        hosts = [j for j in placed if free[j] > 0]
        if not hosts or free[i] == 0:
            return None
        j = rng.choice(hosts)
        rw.AddBond(i, j, Chem.BondType.SINGLE)
        free[i] -= 1
        free[j] -= 1
        placed.append(i)
    # ring closures
    for _ in range(rng.choice([0, 0, 1, 1, 2])):
        cand = [(a, b) for a in range(n) for b in range(a + 1, n)
                if free[a] > 0 and free[b] > 0 and rw.GetBondBetweenAtoms(a, b) is None]
        if not cand:
            break
        a, b = rng.choice(cand)
        rw.AddBond(a, b, Chem.BondType.SINGLE)
        free[a] -= 1
        free[b] -= 1
    # unsaturation
    for bond in list(rw.GetBonds()):
        a, b = bond.GetBeginAtomIdx(), bond.GetEndAtomIdx()
        if free[a] > 0 and free[b] > 0 and rng.random() < 0.3:
            if free[a] > 1 and free[b] > 1 and rng.random() < 0.2:
                bond.SetBondType(Chem.BondType.TRIPLE)
                free[a] -= 2
                free[b] -= 2
            else:
                bond.SetBondType(Chem.BondType.DOUBLE)
                free[a] -= 1
                free[b] -= 1
    mol = rw.GetMol()
    try:
        Chem.SanitizeMol(mol)
    except Exception:
        return None
    if any(r for r in mol.GetRingInfo().AtomRings() if len(r) > 6):
        return None
    for bond in mol.GetBonds():
        pair = {bond.GetBeginAtom().GetSymbol(), bond.GetEndAtom().GetSymbol()}
        if pair == {"O"} or ("F" in pair and pair != {"C", "F"}):
            return None
    mol = Chem.AddHs(mol)
    if mol.GetNumAtoms() > 29:
        return None
    return mol


def embed(mol, seed):
    if AllChem.EmbedMolecule(mol, randomSeed=seed) != 0:
        return None
    props = MMFFGetMoleculeProperties(mol)
    if props is None:
        return None
    ff = MMFFGetMoleculeForceField(mol, props)
    for _ in range(20):
        if ff.Minimize(maxIts=2000) == 0:
            return ff
    return None


def gradient(ff, pos):
    # CalcGrad(pos) reuses stale state unless the energy is evaluated first
    x = pos.tolist()
    ff.CalcEnergy(x)
    return np.array(ff.CalcGrad(x))


def frequencies(mol, ff):
    pos = np.array(ff.Positions(), dtype=float)
    n = len(pos) // 3
    h = 1e-4
    hess = np.zeros((3 * n, 3 * n))
    for k in range(3 * n):
        p = pos.copy()
        p[k] += h
        gp = gradient(ff, p)
        p[k] -= 2 * h
        gm = gradient(ff, p)
        hess[k] = (gp - gm) / (2 * h)
    hess = 0.5 * (hess + hess.T)  # kcal/mol/A^2
    masses = np.repeat([a.GetMass() for a in mol.GetAtoms()], 3)
    mw = hess / np.sqrt(np.outer(masses, masses))
    # kcal/mol/A^2/amu -> s^-2
    conv = 4184.0 / 6.02214076e23 / (ANG ** 2) / AMU
    ev = np.linalg.eigvalsh(mw) * conv
    wn = np.sign(ev) * np.sqrt(np.abs(ev)) / (2 * np.pi * C_CM)
    n_rt = 5 if is_linear(mol) else 6
    if n == 1:
        return np.array([])
    vib = np.sort(wn)[n_rt:]
    return np.clip(vib, 30.0, None)


def is_linear(mol):
    if mol.GetNumAtoms() == 2:
        return True
    x = mol.GetConformer().GetPositions()
    x = x - x.mean(axis=0)
    s = np.linalg.svd(x, compute_uv=False)
    return s[1] < 1e-3 * s[0]


def inertia(mol):
    x = mol.GetConformer().GetPositions()
    m = np.array([a.GetMass() for a in mol.GetAtoms()])
    com = (m[:, None] * x).sum(0) / m.sum()
    x = x - com
    i = np.zeros((3, 3))
    for mi, r in zip(m, x):
        i += mi * (np.dot(r, r) * np.eye(3) - np.outer(r, r))
    return np.sort(np.linalg.eigvalsh(i)), m.sum()  # amu A^2


def thermo(mol, e_elec, freqs):
    mom, mass = inertia(mol)
    kt = KB * T
    # translation
    m_kg = mass * AMU
    q_tr = (2 * np.pi * m_kg * kt / H_PLANCK ** 2) ** 1.5 * kt / P0
    s_tr = R_CAL * (np.log(q_tr) + 2.5)
    e_tr = 1.5 * KB_HA * T
    # rotation
    n = mol.GetNumAtoms()
    if n == 1:
        s_rot, e_rot = 0.0, 0.0
    elif is_linear(mol):
        i_kg = mom[2] * AMU * ANG ** 2
        q_rot = 8 * np.pi ** 2 * i_kg * kt / H_PLANCK ** 2
        s_rot = R_CAL * (np.log(q_rot) + 1.0)
        e_rot = KB_HA * T
    else:
        i_kg = mom * AMU * ANG ** 2
        th = H_PLANCK ** 2 / (8 * np.pi ** 2 * i_kg * KB)
        q_rot = np.sqrt(np.pi) * T ** 1.5 / np.sqrt(np.prod(th))
        s_rot = R_CAL * (np.log(q_rot) + 1.5)
        e_rot = 1.5 * KB_HA * T
    # vibration
    theta_v = freqs * C_CM * H_PLANCK / KB
    zpve = 0.5 * KB_HA * theta_v.sum()
    u = theta_v / T
    e_vib = KB_HA * (theta_v / np.expm1(u)).sum()
    s_vib = R_CAL * (u / np.expm1(u) - np.log1p(-np.exp(-u))).sum()
    cv_vib = R_CAL * (u ** 2 * np.exp(u) / np.expm1(u) ** 2).sum()
    cv = 1.5 * R_CAL + (0 if n == 1 else (R_CAL if is_linear(mol) else 1.5 * R_CAL)) + cv_vib
    u0 = e_elec + zpve
    u298 = u0 + e_tr + e_rot + e_vib
    h298 = u298 + KB_HA * T
    s_tot = (s_tr + s_rot + s_vib) / 1000.0 * HA_PER_KCAL  # Ha / K
    g298 = h298 - T * s_tot
    return mom, zpve, u0, u298, h298, g298, cv


def rot_constants(mom):
    out = []
    for i in mom:
        if i < 1e-8:
            out.append(0.0)
        else:
            out.append(H_PLANCK / (8 * np.pi ** 2 * i * AMU * ANG ** 2) / 1e9)
    return out


def fmt(v):
    return repr(float(v))


def run_one(idx, mol, ff):
    conf = mol.GetConformer()
    atoms = [(a.GetSymbol(), tuple(conf.GetAtomPosition(a.GetIdx()))) for a in mol.GetAtoms()]
    spin = sum(a.GetAtomicNum() for a in mol.GetAtoms()) % 2
    pm = gto.M(atom=atoms, basis="sto-3g", verbose=0, spin=spin)
    mf = scf.RHF(pm) if spin == 0 else scf.ROHF(pm)
    mf.max_cycle = 200
    mf.run()
    if not mf.converged:
        return None
    freqs = frequencies(mol, ff)
    mom, zpve, u0, u, h, g, cv = thermo(mol, mf.e_tot, freqs)
    occ = mf.mo_occ
    homo = mf.mo_energy[occ > 0].max()
    lumo = mf.mo_energy[occ == 0].min() if (occ == 0).any() else homo
    dip = np.linalg.norm(mf.dip_moment(verbose=0))
    dm = mf.make_rdm1()
    if dm.ndim == 3:
        dm = dm[0] + dm[1]
    r2 = np.einsum("ij,ji", pm.intor("int1e_r2"), dm)
    pop = mf.mulliken_pop(verbose=0)[1]
    a_, b_, c_ = sorted(rot_constants(mom), reverse=True)
    props = ["gdb", str(idx), fmt(a_), fmt(b_), fmt(c_), fmt(dip), "0.0", fmt(homo), fmt(lumo),
             fmt(lumo - homo), fmt(r2), fmt(zpve), fmt(u0), fmt(u), fmt(h), fmt(g), fmt(cv)]
    lines = [str(len(atoms)), "\t".join(props)]
    for (sym, (x, y, z)), q in zip(atoms, pop):
        lines.append("\t".join([sym, fmt(x), fmt(y), fmt(z), fmt(q)]))
    lines.append("\t".join("%.4f" % f for f in freqs))
    smi = Chem.MolToSmiles(Chem.RemoveHs(mol))
    lines.append(smi + "\t" + smi)
    try:
        inchi = Chem.MolToInchi(mol)
    except Exception:
        inchi = "InChI=unavailable"
    lines.append(inchi + "\t" + inchi)
    return "\n".join(lines) + "\n"


def main():
    out = sys.argv[1]
    count = int(sys.argv[2]) if len(sys.argv) > 2 else 500
    seed = int(sys.argv[3]) if len(sys.argv) > 3 else 20240917
    rng = random.Random(seed)
    os.makedirs(out, exist_ok=True)
    seen = set()
    idx = 0
    while idx < count:
        mol = random_molecule(rng)
        if mol is None:
            continue
        key = Chem.MolToSmiles(mol)
        if key in seen:
            continue
        ff = embed(mol, rng.randrange(1 << 30))
        if ff is None:
            continue
        text = run_one(idx + 1, mol, ff)
        if text is None:
            continue
        seen.add(key)
        idx += 1
        with open(os.path.join(out, "dsgdb9nsd_%06d.xyz" % idx), "w") as fh:
            fh.write(text)
        print(idx, key, flush=True)


if __name__ == "__main__":
    main()
