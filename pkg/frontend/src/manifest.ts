// Manifest schema of the convstack weight format shared with the Python engine:
// a JSON layer list plus one little-endian float32 binary, conv kernels stored
// [out][in][row][col] with the bias appended per layer, offsets in the manifest
// and a sha256 checksum over the whole payload.

import { createHash } from 'crypto'

export const FORMAT_NAME = 'convstack-weights-v1'

export type Activation = 'relu' | 'linear' | 'square'

export interface ConvLayerEntry {
  kind: 'conv'
  out_channels: number
  in_channels: number
  kernel: [number, number]
  stride: number
  padding: number
  activation: Activation
  weights_offset: number
  weights_bytes: number
  bias_offset: number
  bias_bytes: number
}

export interface PoolLayerEntry {
  kind: 'pool'
  pool: 'max' | 'avg'
  size: number
  stride: number
}

export type LayerEntry = ConvLayerEntry | PoolLayerEntry

export interface Manifest {
  format: typeof FORMAT_NAME
  source: string
  input_channels: number
  layers: LayerEntry[]
  total_bytes: number
  checksum: string
}

export function checksumOf(payload: Buffer): string {
  return 'sha256:' + createHash('sha256').update(payload).digest('hex')
}

export function validateManifest(manifest: Manifest, payload: Buffer): void {
  if (manifest.format !== FORMAT_NAME) {
    throw new Error(`manifest format must be ${FORMAT_NAME}`)
  }
  let cursor = -1
  for (const [i, layer] of manifest.layers.entries()) {
    if (layer.kind !== 'conv') continue
    for (const offset of [layer.weights_offset, layer.bias_offset]) {
      if (offset <= cursor) {
        throw new Error(`layer ${i}: offsets must be strictly ascending`)
      }
      cursor = offset
    }
    const expected = 4 * layer.out_channels * layer.in_channels * layer.kernel[0] * layer.kernel[1]
    if (layer.weights_bytes !== expected) {
      throw new Error(`layer ${i}: weight bytes ${layer.weights_bytes} do not match shape`)
    }
    if (layer.bias_bytes !== 4 * layer.out_channels) {
      throw new Error(`layer ${i}: bias bytes ${layer.bias_bytes} do not match channels`)
    }
  }
  if (manifest.total_bytes !== payload.length) {
    throw new Error(`payload is ${payload.length} bytes, manifest declares ${manifest.total_bytes}`)
  }
  if (manifest.checksum !== checksumOf(payload)) {
    throw new Error('checksum mismatch between manifest and payload')
  }
}
